//! Phase durations and per-edit latency from a session event log.
//!
//! Reads only a handful of fields so it works on logs from any version:
//! `kind`, `timestamp` (RFC 3339), and `payload.type` / `payload.to` /
//! `payload.terminator` / `payload.all_resolved`.

use std::path::Path;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::MetricsError;
use crate::report::read_event_log;

const PHASE_ORDER: [&str; 3] = ["InitialCreation", "AutoRefine", "UserRefine"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub phase: String,
    pub start_seq: u64,
    /// Seconds until the next phase boundary; `None` while the phase is open.
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSpan {
    pub request_seq: u64,
    pub text: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub phases: Vec<PhaseSpan>,
    pub edits: Vec<EditSpan>,
    pub warnings: Vec<String>,
}

impl TimingReport {
    /// Closed duration of the first span of `phase`.
    pub fn phase_duration(&self, phase: &str) -> Option<f64> {
        self.phases.iter().find(|p| p.phase == phase).and_then(|p| p.duration_s)
    }

    pub fn edit_durations(&self) -> Vec<f64> {
        self.edits.iter().map(|e| e.duration_s).collect()
    }

    pub fn mean_edit_s(&self) -> Option<f64> {
        (!self.edits.is_empty()).then(|| self.edits.iter().map(|e| e.duration_s).sum::<f64>() / self.edits.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.phases {
            match p.duration_s {
                Some(d) => out.push_str(&format!("{:<16} {d:>10.3} s\n", p.phase)),
                None => out.push_str(&format!("{:<16} {:>10}\n", p.phase, "open")),
            }
        }
        for (i, e) in self.edits.iter().enumerate() {
            out.push_str(&format!("edit {:<11} {:>10.3} s  {}\n", i + 1, e.duration_s, e.text));
        }
        match self.mean_edit_s() {
            Some(m) => out.push_str(&format!("{:<16} {m:>10.3} s\n", "mean per edit")),
            None => out.push_str("no refinements\n"),
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn seconds_between(a: DateTime<FixedOffset>, b: DateTime<FixedOffset>) -> f64 {
    (b - a).num_microseconds().map(|us| us as f64 / 1e6).unwrap_or(f64::NAN)
}

fn payload_type(e: &Value) -> &str {
    e["payload"]["type"].as_str().unwrap_or_default()
}

fn edit_ends(e: &Value) -> bool {
    match payload_type(e) {
        "awaiting_input" => true,
        "verification" => {
            let p = &e["payload"];
            p["all_resolved"].as_bool().or_else(|| p["round"]["all_resolved"].as_bool()) == Some(true)
        }
        _ => false,
    }
}

pub fn phase_timing(events: &[Value]) -> TimingReport {
    let mut report = TimingReport::default();
    let mut stamped: Vec<(u64, DateTime<FixedOffset>, &Value)> = Vec::with_capacity(events.len());
    for e in events {
        let seq = e["seq"].as_u64().unwrap_or_default();
        match e["timestamp"].as_str().map(DateTime::parse_from_rfc3339) {
            Some(Ok(ts)) => stamped.push((seq, ts, e)),
            _ => report.warnings.push(format!("event {seq} has no usable timestamp; ignored")),
        }
    }

    let boundaries: Vec<_> = stamped.iter().filter(|(_, _, e)| e["kind"] == "PhaseChanged").collect();
    if boundaries.is_empty() {
        report.warnings.push("no PhaseChanged events; phase durations unavailable".into());
    }
    for (k, (seq, ts, e)) in boundaries.iter().enumerate() {
        let phase = e["payload"]["to"].as_str().unwrap_or("unknown").to_owned();
        let duration_s = boundaries.get(k + 1).map(|(_, next, _)| seconds_between(*ts, *next));
        report.phases.push(PhaseSpan { phase, start_seq: *seq, duration_s });
    }
    let seen: Vec<&str> = report.phases.iter().map(|p| p.phase.as_str()).collect();
    let last_known = seen.iter().filter_map(|p| PHASE_ORDER.iter().position(|o| o == p)).max();
    if let Some(last) = last_known {
        for missing in PHASE_ORDER[..=last].iter().filter(|p| !seen.contains(p)) {
            report.warnings.push(format!("no boundary recorded for phase {missing}"));
        }
    }

    for (i, (seq, start, e)) in stamped.iter().enumerate() {
        if payload_type(e) != "refinement_request" || e["payload"]["terminator"].as_bool() == Some(true) {
            continue;
        }
        let text = e["payload"]["text"].as_str().unwrap_or_default().to_owned();
        let next_request = stamped[i + 1..].iter().position(|(_, _, x)| payload_type(x) == "refinement_request");
        let window = &stamped[i + 1..i + 1 + next_request.unwrap_or(stamped.len() - i - 1)];
        match window.iter().find(|(_, _, x)| edit_ends(x)) {
            Some((_, end, _)) => {
                report.edits.push(EditSpan { request_seq: *seq, text, duration_s: seconds_between(*start, *end) })
            }
            None => report.warnings.push(format!("refinement at seq {seq} never completed")),
        }
    }
    report
}

pub fn phase_timing_for_session(session_dir: &Path) -> Result<TimingReport, MetricsError> {
    Ok(phase_timing(&read_event_log(&session_dir.join("events.ndjson"))?))
}
