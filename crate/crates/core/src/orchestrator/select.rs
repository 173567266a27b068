//! The selector: a pure function from (state, machine, outcome of the last
//! step) to the next step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{
    Event, Payload, Phase, Reason, Role, SessionState, Step, SubtaskStatus, VerificationTarget,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Next {
    Agent(Role),
    RenderTool,
    /// Move to the given phase.
    Advance(Phase),
    /// Stop the session: `Terminator` ends it, `CapExhausted` fails it.
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnDecision {
    pub next: Next,
    pub reason: Reason,
    /// Phase-1 subtask the step works on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<u32>,
}

impl TurnDecision {
    fn new(next: Next, reason: Reason) -> Self {
        Self { next, reason, subtask: None }
    }

    fn on(mut self, subtask: Option<u32>) -> Self {
        self.subtask = subtask;
        self
    }

    pub fn step(&self) -> Option<Step> {
        match self.next {
            Next::Agent(Role::Planner) => Some(Step::Planner),
            Next::Agent(Role::Retrieval) => Some(Step::Retrieval),
            Next::Agent(Role::Coding) => Some(Step::Coding),
            Next::Agent(Role::Critic) => Some(Step::Critic),
            Next::Agent(Role::Verification) => Some(Step::Verification),
            Next::Agent(Role::UserProxy) => Some(Step::UserProxy),
            Next::RenderTool => Some(Step::Render),
            Next::Advance(_) | Next::Halt => None,
        }
    }
}

/// Progress within the current phase, recomputed from the session so a
/// reopened session resumes exactly where it stopped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    /// First subtask not yet done.
    pub subtask: Option<u32>,
    /// Failed executions since the last clean one.
    pub retries: u32,
    pub critique_round: u32,
    /// Verification rounds against the current target.
    pub verification_round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_target: Option<VerificationTarget>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMachine {
    pub phase: Phase,
    pub cursor: Cursor,
    pub max_exec_retries: u32,
    pub max_critique_rounds: u32,
    pub max_verification_rounds: u32,
}

impl PhaseMachine {
    pub fn from_state(state: &SessionState) -> Self {
        let retries = state
            .code_versions
            .iter()
            .rev()
            .take_while(|c| c.execution.as_ref().is_some_and(|o| !o.ok))
            .count() as u32;
        let verification_target = match state.phase {
            Phase::AutoRefine => state.critiques.last().map(|c| VerificationTarget::CritiqueRound(c.round)),
            Phase::UserRefine if !state.refinements.is_empty() => {
                Some(VerificationTarget::Refinement(state.refinements.len() as u32))
            }
            _ => None,
        };
        let verification_round = verification_target
            .map(|t| state.verifications.iter().filter(|v| v.target == t).count() as u32)
            .unwrap_or(0);
        Self {
            phase: state.phase,
            cursor: Cursor {
                subtask: state.subtasks.iter().find(|s| s.status != SubtaskStatus::Done).map(|s| s.index),
                retries,
                critique_round: state.critiques.len() as u32,
                verification_round,
                verification_target,
            },
            max_exec_retries: state.config.max_exec_retries,
            max_critique_rounds: state.config.max_critique_rounds,
            max_verification_rounds: state.config.max_verification_rounds,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("session is {0}; nothing to select")]
    Closed(Phase),
    #[error("{event} cannot follow in phase {phase}")]
    Illegal { phase: Phase, event: String },
    #[error("waiting for user input")]
    AwaitingInput,
}

fn describe(event: &Event) -> String {
    let v = serde_json::to_value(&event.payload).unwrap_or_default();
    format!("{:?}({})", event.kind, v["type"].as_str().unwrap_or("?"))
}

/// After a plan or a finished subtask: the first pending subtask goes to
/// its assignee, coding-assigned ones skipping the retrieval turn.
fn start_subtask(state: &SessionState, index: u32, reason: Reason) -> TurnDecision {
    let role = match state.subtask(index).map(|s| s.assignee) {
        Some(Role::Coding) => Role::Coding,
        _ => Role::Retrieval,
    };
    TurnDecision::new(Next::Agent(role), reason).on(Some(index))
}

pub fn select_next(state: &SessionState, machine: &PhaseMachine, last_event: &Event) -> Result<TurnDecision, SelectError> {
    let phase = machine.phase;
    if phase.is_terminal() {
        return Err(SelectError::Closed(phase));
    }
    let c = &machine.cursor;
    let illegal = || Err(SelectError::Illegal { phase, event: describe(last_event) });
    let exec_failed = || {
        if c.retries <= machine.max_exec_retries {
            TurnDecision::new(Next::Agent(Role::Retrieval), Reason::ExecError)
        } else {
            TurnDecision::new(Next::Halt, Reason::CapExhausted)
        }
    };
    let subtask = if phase == Phase::InitialCreation { c.subtask } else { None };

    let decision = match (phase, &last_event.payload) {
        (_, Payload::PhaseChanged { to, .. }) if *to == phase => match phase {
            Phase::InitialCreation => TurnDecision::new(Next::Agent(Role::Planner), Reason::PhaseEntered),
            Phase::AutoRefine => TurnDecision::new(Next::RenderTool, Reason::PhaseEntered),
            _ => TurnDecision::new(Next::Agent(Role::UserProxy), Reason::PhaseEntered),
        },
        (Phase::InitialCreation, Payload::Plan { .. }) => match c.subtask {
            Some(i) => start_subtask(state, i, Reason::PlanReady),
            None => return illegal(),
        },
        (_, Payload::Retrieval(_)) => TurnDecision::new(Next::Agent(Role::Coding), Reason::Retrieved).on(subtask),
        (_, Payload::CodeExecuted { outcome, .. }) if !outcome.ok => exec_failed().on(subtask),
        (Phase::InitialCreation, Payload::CodeExecuted { .. }) => match c.subtask {
            Some(i) => start_subtask(state, i, Reason::SubtaskNext),
            None => TurnDecision::new(Next::Advance(Phase::AutoRefine), Reason::ExecOk),
        },
        (_, Payload::CodeExecuted { .. }) => TurnDecision::new(Next::RenderTool, Reason::ExecOk),
        (Phase::AutoRefine, Payload::Render(_)) if c.critique_round == 0 => {
            TurnDecision::new(Next::Agent(Role::Critic), Reason::Rendered)
        }
        (Phase::AutoRefine | Phase::UserRefine, Payload::Render(_)) => {
            TurnDecision::new(Next::Agent(Role::Verification), Reason::Rendered)
        }
        (Phase::AutoRefine, Payload::Critique(round)) if round.approved => {
            TurnDecision::new(Next::Advance(Phase::UserRefine), Reason::CritiqueClean)
        }
        (Phase::AutoRefine, Payload::Critique(_)) if c.critique_round > machine.max_critique_rounds => {
            TurnDecision::new(Next::Advance(Phase::UserRefine), Reason::CapExhausted)
        }
        (Phase::AutoRefine, Payload::Critique(_)) => TurnDecision::new(Next::Agent(Role::Coding), Reason::CritiqueFound),
        (Phase::AutoRefine, Payload::Verification(v)) => {
            if v.all_resolved {
                TurnDecision::new(Next::Advance(Phase::UserRefine), Reason::VerifyPassed)
            } else if c.verification_round >= machine.max_verification_rounds {
                TurnDecision::new(Next::Advance(Phase::UserRefine), Reason::CapExhausted)
            } else {
                TurnDecision::new(Next::Agent(Role::Coding), Reason::VerifyFailed)
            }
        }
        (Phase::UserRefine, Payload::Verification(v)) => {
            if v.all_resolved {
                TurnDecision::new(Next::Agent(Role::UserProxy), Reason::VerifyPassed)
            } else if c.verification_round >= machine.max_verification_rounds {
                TurnDecision::new(Next::Agent(Role::UserProxy), Reason::CapExhausted)
            } else {
                TurnDecision::new(Next::Agent(Role::Coding), Reason::VerifyFailed)
            }
        }
        (Phase::UserRefine, Payload::RefinementRequest(r)) if r.terminator => {
            TurnDecision::new(Next::Halt, Reason::Terminator)
        }
        (Phase::UserRefine, Payload::RefinementRequest(_)) => {
            TurnDecision::new(Next::Agent(Role::Coding), Reason::UserInput)
        }
        (Phase::UserRefine, Payload::AwaitingInput {}) => return Err(SelectError::AwaitingInput),
        _ => return illegal(),
    };
    Ok(decision)
}
