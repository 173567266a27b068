//! Log normalization for determinism checks: wall-clock fields are nulled so
//! two runs of the same script compare byte for byte.

use serde_json::Value;

use super::event::Event;

/// Keys whose values depend on the wall clock.
pub const MASKED_KEYS: [&str; 6] = ["timestamp", "submitted_at", "wall_time_ms", "latency_ms", "created_at", "updated_at"];

pub fn mask_value(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if MASKED_KEYS.contains(&k.as_str()) {
                    *v = Value::Null;
                } else {
                    mask_value(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(mask_value),
        _ => {}
    }
}

pub fn masked_event(event: &Event) -> Value {
    let mut v = serde_json::to_value(event).expect("events always serialize");
    mask_value(&mut v);
    v
}

/// One masked JSON line per event.
pub fn normalized_log(events: &[Event]) -> String {
    events.iter().map(|e| masked_event(e).to_string() + "\n").collect()
}

/// Same as [`normalized_log`] but over raw `events.ndjson` text, so files
/// written by other builds can be compared too. Unparseable lines pass
/// through untouched.
pub fn normalize_ndjson(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<Value>(line) {
            Ok(mut v) => {
                mask_value(&mut v);
                out.push_str(&v.to_string());
            }
            Err(_) => out.push_str(line),
        }
        out.push('\n');
    }
    out
}
