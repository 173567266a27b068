use chrono::{DateTime, Utc};
use meshwright_core::{Phase, SessionState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub goal: String,
    pub phase: Phase,
    pub awaiting_input: bool,
    pub latest_code_version: Option<u32>,
    pub latest_render_set_id: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
    pub updated_at: Option<DateTime<Utc>>,
}

impl SessionSummary {
    pub fn of(state: &SessionState) -> Self {
        Self {
            session_id: state.session_id.clone(),
            goal: state.goal.clone(),
            phase: state.phase,
            awaiting_input: state.awaiting_input,
            latest_code_version: state.code_versions.last().map(|c| c.version),
            latest_render_set_id: state.render_sets.last().map(|r| r.render_set_id.clone()),
            created_at: state.event_log.first().map(|e| e.timestamp),
            updated_at: state.event_log.last().map(|e| e.timestamp),
        }
    }
}
