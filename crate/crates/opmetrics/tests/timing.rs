use meshwright_opmetrics::phase_timing;
use serde_json::{json, Value};

fn at(seq: u64, secs: i64, kind: &str, payload: Value) -> Value {
    let ts = chrono::DateTime::from_timestamp(1_767_225_600 + secs, 0).unwrap().to_rfc3339();
    json!({"seq": seq, "timestamp": ts, "actor": "system", "kind": kind, "payload": payload})
}

fn phase(seq: u64, secs: i64, to: &str) -> Value {
    at(seq, secs, "PhaseChanged", json!({"type": "phase_changed", "to": to}))
}

#[test]
fn phase_durations() {
    let log = vec![
        phase(1, 0, "InitialCreation"),
        at(2, 100, "CodeExecuted", json!({"type": "code_executed"})),
        phase(3, 240, "AutoRefine"),
        phase(4, 600, "UserRefine"),
    ];
    let r = phase_timing(&log);
    assert_eq!(r.phase_duration("InitialCreation"), Some(240.0));
    assert_eq!(r.phase_duration("AutoRefine"), Some(360.0));
    assert_eq!(r.phase_duration("UserRefine"), None);
    assert!(r.edits.is_empty());
    assert_eq!(r.mean_edit_s(), None);
    assert!(r.warnings.is_empty());
}

#[test]
fn two_edits() {
    let log = vec![
        phase(1, 0, "InitialCreation"),
        phase(2, 240, "AutoRefine"),
        phase(3, 600, "UserRefine"),
        at(4, 700, "TurnEnded", json!({"type": "refinement_request", "text": "add lemons", "terminator": false})),
        at(5, 720, "TurnEnded", json!({"type": "verification", "all_resolved": false})),
        at(6, 730, "TurnEnded", json!({"type": "verification", "all_resolved": true})),
        at(7, 730, "TurnEnded", json!({"type": "awaiting_input"})),
        at(8, 800, "TurnEnded", json!({"type": "refinement_request", "text": "make it taller", "terminator": false})),
        at(9, 845, "TurnEnded", json!({"type": "awaiting_input"})),
        at(10, 900, "TurnEnded", json!({"type": "refinement_request", "text": "COMPLETE", "terminator": true})),
        phase(11, 900, "Terminated"),
    ];
    let r = phase_timing(&log);
    assert_eq!(r.edit_durations(), vec![30.0, 45.0]);
    assert_eq!(r.mean_edit_s(), Some(37.5));
    assert_eq!(r.phase_duration("UserRefine"), Some(300.0));
    assert!(r.to_text().contains("37.500"));
}

#[test]
fn missing_boundaries_warn() {
    let log = vec![
        phase(1, 0, "InitialCreation"),
        phase(2, 50, "UserRefine"),
        at(3, 60, "TurnEnded", json!({"type": "refinement_request", "text": "x", "terminator": false})),
    ];
    let r = phase_timing(&log);
    assert_eq!(r.phase_duration("InitialCreation"), Some(50.0));
    assert_eq!(r.warnings.len(), 2, "{:?}", r.warnings);
    assert!(phase_timing(&[]).warnings.iter().any(|w| w.contains("PhaseChanged")));
}
