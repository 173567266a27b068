use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{Event, Payload, RetrievalRecord};
use super::types::{
    CodeArtifact, CritiqueRound, Phase, Provocation, RefinementRequest, RenderSet, SessionConfig, Subtask,
    SubtaskStatus, VerificationRound, VerificationStatus, VerificationTarget,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("event kind {kind:?} does not match its payload")]
    KindMismatch { kind: super::event::EventKind },
    #[error("illegal event at seq {seq}: {detail}")]
    Illegal { seq: u64, detail: String },
}

/// The projection of a session's event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub goal: String,
    pub phase: Phase,
    pub subtasks: Vec<Subtask>,
    pub code_versions: Vec<CodeArtifact>,
    pub critiques: Vec<CritiqueRound>,
    pub verifications: Vec<VerificationRound>,
    pub render_sets: Vec<RenderSet>,
    pub refinements: Vec<RefinementRequest>,
    pub retrievals: Vec<RetrievalRecord>,
    pub config: SessionConfig,
    pub plan_complete: bool,
    /// Set by the selector's user-proxy decision, cleared by the next request.
    pub awaiting_input: bool,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updated_at: Option<DateTime<Utc>>,
    pub last_seq: u64,
    /// Not part of `session.json`; the log lives in `events.ndjson`.
    #[serde(skip)]
    pub event_log: Vec<Event>,
}

impl SessionState {
    /// Folds a complete log from scratch.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, StateError> {
        let mut state = SessionState::default();
        for e in events {
            state.apply(e.clone())?;
        }
        Ok(state)
    }

    pub fn is_started(&self) -> bool {
        self.last_seq > 0
    }

    pub fn latest_code(&self) -> Option<&CodeArtifact> {
        self.code_versions.last()
    }

    /// Most recent version that executed cleanly.
    pub fn latest_good_code(&self) -> Option<&CodeArtifact> {
        self.code_versions.iter().rev().find(|c| c.execution.as_ref().is_some_and(|o| o.ok))
    }

    pub fn render_set(&self, id: &str) -> Option<&RenderSet> {
        self.render_sets.iter().find(|r| r.render_set_id == id)
    }

    pub fn latest_render(&self) -> Option<&RenderSet> {
        self.render_sets.last()
    }

    pub fn subtask(&self, index: u32) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.index == index)
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq + 1
    }

    /// Checks that `event` may be appended, without changing anything.
    pub fn validate(&self, event: &Event) -> Result<(), StateError> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(StateError::SequenceGap { expected, got: event.seq });
        }
        if event.kind != event.payload.kind() {
            return Err(StateError::KindMismatch { kind: event.kind });
        }
        let illegal = |detail: String| Err(StateError::Illegal { seq: event.seq, detail });

        if !self.is_started() {
            return match &event.payload {
                Payload::PhaseChanged { to: Phase::InitialCreation, init: Some(init), .. } => {
                    if init.goal.trim().is_empty() {
                        illegal("goal is empty".into())
                    } else {
                        Ok(())
                    }
                }
                _ => illegal("a session must open with PhaseChanged carrying the session init".into()),
            };
        }
        if self.phase.is_terminal() && !matches!(event.payload, Payload::Terminated { .. } | Payload::Error { .. }) {
            return illegal(format!("session is {}", self.phase));
        }

        match &event.payload {
            Payload::PhaseChanged { from, to, init, .. } => {
                if init.is_some() {
                    return illegal("session init repeated".into());
                }
                if *from != Some(self.phase) || !self.phase.can_become(*to) {
                    return illegal(format!("phase {} cannot become {to}", self.phase));
                }
            }
            Payload::Plan { subtasks, .. } => {
                if !self.subtasks.is_empty() {
                    return illegal("plan already recorded".into());
                }
                if subtasks.is_empty() {
                    return illegal("plan has no subtasks".into());
                }
                for (i, s) in subtasks.iter().enumerate() {
                    if s.index as usize != i + 1 || s.description.trim().is_empty() {
                        return illegal(format!("subtask {} malformed", i + 1));
                    }
                }
            }
            Payload::TurnStarted { subtask: Some(i), .. } => {
                if self.subtask(*i).is_none() {
                    return illegal(format!("unknown subtask {i}"));
                }
            }
            Payload::CodeSubmitted { version, source, provoking_input, .. } => {
                if *version as usize != self.code_versions.len() + 1 {
                    return illegal(format!("code version {version} out of order"));
                }
                if source.is_empty() {
                    return illegal("empty code".into());
                }
                let known = match provoking_input {
                    Provocation::Subtask(i) => self.subtask(*i).is_some(),
                    Provocation::CritiqueRound(r) => self.critiques.iter().any(|c| c.round == *r),
                    Provocation::VerificationRound(r) => self.verifications.iter().any(|v| v.round == *r),
                    Provocation::Refinement(i) => (1..=self.refinements.len() as u32).contains(i),
                };
                if !known {
                    return illegal(format!("unknown provoking input {provoking_input:?}"));
                }
            }
            Payload::CodeExecuted { version, outcome } => {
                match self.code_versions.get((*version as usize).wrapping_sub(1)) {
                    Some(c) if c.execution.is_none() => {}
                    Some(_) => return illegal(format!("version {version} already executed")),
                    None => return illegal(format!("unknown version {version}")),
                }
                if !outcome.is_consistent() {
                    return illegal("ok flag disagrees with error".into());
                }
            }
            Payload::Render(rs) => {
                if rs.view_count as usize != rs.views.len() || self.render_set(&rs.render_set_id).is_some() {
                    return illegal(format!("render set {} malformed or duplicated", rs.render_set_id));
                }
            }
            Payload::Critique(round) => {
                if self.render_set(&round.render_set_id).is_none() {
                    return illegal(format!("critique references unknown render set {}", round.render_set_id));
                }
                if round.approved != round.items.is_empty() {
                    return illegal("approved must equal an empty critique list".into());
                }
                if round.round as usize != self.critiques.len() + 1 {
                    return illegal(format!("critique round {} out of order", round.round));
                }
            }
            Payload::Verification(v) => {
                for id in [&v.render_set_id_before, &v.render_set_id_after] {
                    if self.render_set(id).is_none() {
                        return illegal(format!("verification references unknown render set {id}"));
                    }
                }
                if v.round as usize != self.verifications.len() + 1 {
                    return illegal(format!("verification round {} out of order", v.round));
                }
                let all = v.items.iter().all(|i| i.status == VerificationStatus::Resolved);
                if v.items.is_empty() || v.items.len() != v.critiques.len() || all != v.all_resolved {
                    return illegal("verification items inconsistent".into());
                }
                if v.items.iter().any(|i| i.status != VerificationStatus::Resolved && i.followup_instruction.is_none()) {
                    return illegal("unresolved item without followup".into());
                }
                let target_known = match v.target {
                    VerificationTarget::CritiqueRound(r) => self.critiques.iter().any(|c| c.round == r),
                    VerificationTarget::Refinement(i) => (1..=self.refinements.len() as u32).contains(&i),
                };
                if !target_known {
                    return illegal(format!("unknown verification target {:?}", v.target));
                }
            }
            Payload::RefinementRequest(_) if self.phase != Phase::UserRefine => {
                return illegal("refinements are only accepted in UserRefine".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Validates and folds one event.
    pub fn apply(&mut self, event: Event) -> Result<(), StateError> {
        self.validate(&event)?;
        self.apply_unchecked(event);
        Ok(())
    }

    fn apply_unchecked(&mut self, event: Event) {
        match &event.payload {
            Payload::PhaseChanged { to, init, .. } => {
                if let Some(init) = init {
                    self.session_id = init.session_id.clone();
                    self.goal = init.goal.clone();
                    self.config = init.config.clone();
                    self.created_at = Some(event.timestamp);
                }
                self.phase = *to;
                self.awaiting_input = false;
            }
            Payload::Plan { subtasks, complete } => {
                self.subtasks = subtasks.clone();
                self.plan_complete = *complete;
            }
            Payload::TurnStarted { subtask: Some(i), .. } => {
                if let Some(s) = self.subtasks.iter_mut().find(|s| s.index == *i) {
                    if s.status == SubtaskStatus::Pending {
                        s.status = SubtaskStatus::InProgress;
                    }
                }
            }
            Payload::CodeSubmitted { version, source, phase, provoking_input, retry_of } => {
                self.code_versions.push(CodeArtifact {
                    version: *version,
                    source: source.clone(),
                    produced_by_phase: *phase,
                    provoking_input: *provoking_input,
                    retry_of: *retry_of,
                    execution: None,
                });
            }
            Payload::CodeExecuted { version, outcome } => {
                let code = &mut self.code_versions[*version as usize - 1];
                code.execution = Some(outcome.clone());
                if let (true, Provocation::Subtask(i)) = (outcome.ok, code.provoking_input) {
                    if let Some(s) = self.subtasks.iter_mut().find(|s| s.index == i) {
                        s.status = SubtaskStatus::Done;
                    }
                }
            }
            Payload::Render(rs) => self.render_sets.push(rs.clone()),
            Payload::Critique(round) => self.critiques.push(round.clone()),
            Payload::Verification(v) => self.verifications.push(v.clone()),
            Payload::Retrieval(r) => self.retrievals.push(r.clone()),
            Payload::RefinementRequest(r) => {
                self.refinements.push(r.clone());
                self.awaiting_input = false;
            }
            Payload::AwaitingInput {} => self.awaiting_input = true,
            Payload::Error { message, fatal, .. } => {
                if *fatal {
                    self.failure = Some(message.clone());
                } else {
                    self.warnings.push(message.clone());
                }
            }
            _ => {}
        }
        self.last_seq = event.seq;
        self.updated_at = Some(event.timestamp);
        self.event_log.push(event);
    }
}
