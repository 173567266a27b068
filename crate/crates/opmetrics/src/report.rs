use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::MetricsError;
use crate::extract::extract_calls;
use crate::patterns::{classify, PatternSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptReport {
    pub script_id: String,
    pub simple_ops: BTreeSet<String>,
    pub complex_ops: BTreeSet<String>,
    pub unmatched_calls: BTreeSet<String>,
    pub skipped_fragments: usize,
    /// Failed executions in the session log; `None` for bare scripts.
    pub error_count: Option<usize>,
}

impl ScriptReport {
    pub fn from_source(script_id: impl Into<String>, source: &str, patterns: &PatternSet) -> Self {
        let extracted = extract_calls(source);
        let c = classify(&extracted.calls, patterns);
        Self {
            script_id: script_id.into(),
            simple_ops: c.simple_ops,
            complex_ops: c.complex_ops,
            unmatched_calls: c.unmatched_calls,
            skipped_fragments: extracted.skipped_fragments,
            error_count: None,
        }
    }
}

/// Reads `events.ndjson` as loosely typed records.
pub fn read_event_log(path: &Path) -> Result<Vec<Value>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|e| MetricsError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| MetricsError::EventLog(format!("{} line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Number of `CodeExecuted` events whose outcome was not ok.
pub fn count_failed_executions(events: &[Value]) -> usize {
    events
        .iter()
        .filter(|e| e["kind"] == "CodeExecuted")
        .filter(|e| {
            let p = &e["payload"];
            let ok = p["outcome"]["ok"].as_bool().or_else(|| p["ok"].as_bool());
            ok == Some(false)
        })
        .count()
}

/// Path of the highest `code/v{N}.py` in a session directory.
pub fn latest_code_version(session_dir: &Path) -> Option<(u32, PathBuf)> {
    let entries = std::fs::read_dir(session_dir.join("code")).ok()?;
    entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let n: u32 = name.strip_prefix('v')?.strip_suffix(".py")?.parse().ok()?;
            Some((n, e.path()))
        })
        .max_by_key(|(n, _)| *n)
}

/// Report for a session directory: latest code version classified, errors
/// counted from the event log. Missing code is tolerated (the session may
/// have failed before producing any).
pub fn analyze_session(session_dir: &Path, script_id: &str, patterns: &PatternSet) -> Result<ScriptReport, MetricsError> {
    let events = read_event_log(&session_dir.join("events.ndjson"))?;
    let mut report = match latest_code_version(session_dir) {
        Some((_, path)) => {
            let source = std::fs::read_to_string(&path).map_err(|e| MetricsError::io(&path, e))?;
            ScriptReport::from_source(script_id, &source, patterns)
        }
        None => ScriptReport::from_source(script_id, "", patterns),
    };
    report.error_count = Some(count_failed_executions(&events));
    Ok(report)
}
