//! Compact, human-diffable view of the turn order in an event log.

use crate::session::{Event, Payload};

/// One line per turn start, phase change, input wait and termination, e.g.
/// `retrieval SubtaskNext s2` or `phase AutoRefine ExecOk`.
pub fn turn_trace(events: &[Event]) -> Vec<String> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::TurnStarted { step, reason, subtask } => Some(match subtask {
                Some(i) => format!("{} {reason:?} s{i}", step.as_str()),
                None => format!("{} {reason:?}", step.as_str()),
            }),
            Payload::PhaseChanged { to, reason, init: None, .. } => Some(format!("phase {to} {reason:?}")),
            Payload::AwaitingInput {} => Some("awaiting".into()),
            Payload::Terminated { reason } => Some(format!("terminated {reason:?}")),
            _ => None,
        })
        .collect()
}
