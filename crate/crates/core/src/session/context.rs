//! The shared-context projection every agent turn is built from.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::event::{Event, Payload};
use super::state::SessionState;
use super::types::{
    Actor, Critique, Role, Subtask, SubtaskStatus, VerificationRound, VerificationStatus, VerificationTarget,
};

const CHARS_PER_TOKEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSlot {
    pub version: u32,
    pub source: String,
}

/// A critique (or refinement) that has not been verified as resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenItem {
    pub critique: Critique,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<VerificationStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followup: Option<String>,
}

impl OpenItem {
    /// What the coder should do next about this item.
    pub fn instruction(&self) -> &str {
        self.followup.as_deref().unwrap_or(&self.critique.suggested_fix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMessage {
    pub seq: u64,
    pub actor: Actor,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub role: Role,
    pub goal: String,
    pub subtasks: Vec<Subtask>,
    pub code: Option<CodeSlot>,
    pub open_items: Vec<OpenItem>,
    pub recent: Vec<ContextMessage>,
    /// Recent events left out to respect the token budget.
    pub dropped_events: usize,
}

/// Items of the latest critique round still open after its verifications.
pub fn open_critique_items(state: &SessionState) -> Vec<OpenItem> {
    let Some(round) = state.critiques.last() else { return Vec::new() };
    let mut open: Vec<OpenItem> =
        round.items.iter().map(|c| OpenItem { critique: c.clone(), status: None, followup: None }).collect();
    for v in state.verifications.iter().filter(|v| v.target == VerificationTarget::CritiqueRound(round.round)) {
        fold_verification(&mut open, v);
    }
    open
}

/// Open item for the latest refinement, when its verification failed.
pub fn open_refinement_items(state: &SessionState) -> Vec<OpenItem> {
    let index = state.refinements.len() as u32;
    let rounds: Vec<&VerificationRound> =
        state.verifications.iter().filter(|v| v.target == VerificationTarget::Refinement(index)).collect();
    let Some(first) = rounds.first() else { return Vec::new() };
    let mut open: Vec<OpenItem> =
        first.critiques.iter().map(|c| OpenItem { critique: c.clone(), status: None, followup: None }).collect();
    for v in rounds {
        fold_verification(&mut open, v);
    }
    open
}

fn fold_verification(open: &mut Vec<OpenItem>, v: &VerificationRound) {
    for item in &v.items {
        if let Some(pos) = open.iter().position(|o| o.critique.index == item.critique_index) {
            if item.status == VerificationStatus::Resolved {
                open.remove(pos);
            } else {
                open[pos].status = Some(item.status);
                open[pos].followup = item.followup_instruction.clone();
            }
        }
    }
}

fn describe(event: &Event, role: Role) -> Option<String> {
    let planner = role == Role::Planner;
    Some(match &event.payload {
        Payload::PhaseChanged { to, reason, .. } => format!("phase is now {to} ({reason:?})"),
        Payload::Plan { subtasks, .. } => {
            let mut s = String::from("plan:");
            for t in subtasks {
                let _ = write!(s, "\n{}. {}: {}", t.index, t.assignee.agent_name(), t.description);
            }
            s
        }
        Payload::Retrieval(r) => match &r.summary_text {
            Some(summary) => format!("documentation for \"{}\":\n{summary}", r.query),
            None => format!("no documentation available for \"{}\"", r.query),
        },
        Payload::Critique(c) if c.approved => format!("critique round {}: no issues", c.round),
        Payload::Critique(c) => {
            let mut s = format!("critique round {} on {}:", c.round, c.render_set_id);
            for q in &c.items {
                let _ = write!(s, "\n{}. problem: {} | fix: {}", q.index, q.problem, q.suggested_fix);
            }
            s
        }
        Payload::Verification(v) => {
            let mut s = format!("verification round {}:", v.round);
            for i in &v.items {
                let _ = write!(s, "\n{}. {:?}", i.critique_index, i.status);
                if let Some(f) = &i.followup_instruction {
                    let _ = write!(s, ": {f}");
                }
            }
            s
        }
        Payload::RefinementRequest(r) => format!("user request: {}", r.text),
        Payload::Render(rs) => format!("rendered {} views as {}", rs.view_count, rs.render_set_id),
        Payload::Error { message, .. } => format!("error: {message}"),
        Payload::CodeSubmitted { .. } | Payload::CodeExecuted { .. } | Payload::ToolInvoked { .. } if planner => {
            return None
        }
        Payload::CodeSubmitted { version, .. } => format!("submitted code v{version}"),
        Payload::CodeExecuted { version, outcome } => match &outcome.error {
            None => format!("code v{version} executed successfully"),
            Some(e) => {
                let mut s = format!("code v{version} failed: {:?}: {}", e.kind, e.message);
                let tail = e.traceback_tail(5);
                if !tail.is_empty() {
                    s.push_str("\n");
                    s.push_str(&tail.join("\n"));
                }
                s
            }
        },
        Payload::ToolInvoked { tool, .. } => format!("called {tool}"),
        Payload::Terminated { .. } => "session terminated".into(),
        Payload::TurnStarted { .. } | Payload::ModelCall { .. } | Payload::AwaitingInput {} => {
            return None
        }
    })
}

pub fn assemble_context(state: &SessionState, role: Role) -> ContextBundle {
    let code = state.latest_code().map(|c| CodeSlot { version: c.version, source: c.source.clone() });
    let mut open_items = open_critique_items(state);
    open_items.extend(open_refinement_items(state));

    let k = state.config.context_events;
    let all: Vec<ContextMessage> = state
        .event_log
        .iter()
        .filter_map(|e| describe(e, role).map(|text| ContextMessage { seq: e.seq, actor: e.actor, text }))
        .collect();
    let mut dropped = all.len().saturating_sub(k);
    let mut recent: Vec<ContextMessage> = all.into_iter().skip(dropped).collect();

    let mut bundle = ContextBundle {
        role,
        goal: state.goal.clone(),
        subtasks: state.subtasks.clone(),
        code,
        open_items,
        recent: Vec::new(),
        dropped_events: 0,
    };
    let budget_chars = state.config.context_token_budget.saturating_mul(CHARS_PER_TOKEN);
    let fixed = bundle.render().len();
    let mut used: usize = recent.iter().map(|m| m.text.len() + 16).sum();
    while fixed + used > budget_chars && !recent.is_empty() {
        used -= recent[0].text.len() + 16;
        recent.remove(0);
        dropped += 1;
    }
    bundle.recent = recent;
    bundle.dropped_events = dropped;
    bundle
}

impl ContextBundle {
    pub fn code_source(&self) -> Option<&str> {
        self.code.as_ref().map(|c| c.source.as_str())
    }

    pub fn render_subtasks(&self) -> String {
        let mut s = String::new();
        for t in &self.subtasks {
            let status = match t.status {
                SubtaskStatus::Pending => "pending",
                SubtaskStatus::InProgress => "in progress",
                SubtaskStatus::Done => "done",
            };
            let _ = writeln!(s, "{}. [{status}] {}", t.index, t.description);
        }
        s
    }

    pub fn render_open_items(&self) -> String {
        let mut s = String::new();
        for o in &self.open_items {
            let _ = write!(s, "{}. problem: {} | fix: {}", o.critique.index, o.critique.problem, o.critique.suggested_fix);
            if let (Some(status), Some(f)) = (o.status, &o.followup) {
                let _ = write!(s, " | verifier: {status:?}: {f}");
            }
            s.push('\n');
        }
        s
    }

    pub fn render_history(&self) -> String {
        let mut s = String::new();
        if self.dropped_events > 0 {
            let _ = writeln!(s, "({} earlier events omitted)", self.dropped_events);
        }
        for m in &self.recent {
            let _ = writeln!(s, "[{}] {}", m.actor.as_str(), m.text);
        }
        s
    }

    /// Full text form: goal, subtasks, current code, open items, history.
    pub fn render(&self) -> String {
        let mut s = format!("## Goal\n{}\n", self.goal);
        if !self.subtasks.is_empty() {
            let _ = write!(s, "\n## Subtasks\n{}", self.render_subtasks());
        }
        if let Some(code) = &self.code {
            let _ = write!(s, "\n## Current code (v{})\n```python\n{}", code.version, code.source);
            if !code.source.ends_with('\n') {
                s.push('\n');
            }
            s.push_str("```\n");
        }
        if !self.open_items.is_empty() {
            let _ = write!(s, "\n## Open issues\n{}", self.render_open_items());
        }
        if !self.recent.is_empty() {
            let _ = write!(s, "\n## Recent activity\n{}", self.render_history());
        }
        s
    }
}
