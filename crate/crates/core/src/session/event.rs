use chrono::{DateTime, Utc};
use meshwright_bridge::{ExecutionError, ExecutionOutcome};
use meshwright_gateway::{ChatRequest, ChatResponse};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::{
    Actor, CritiqueRound, Phase, Provocation, RefinementRequest, RenderSet, SessionConfig, Subtask,
    VerificationRound,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TurnStarted,
    TurnEnded,
    ModelCall,
    ToolCall,
    CodeExecuted,
    RenderProduced,
    PhaseChanged,
    Error,
    Terminated,
}

/// Why the selector chose the next step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    PhaseEntered,
    PlanReady,
    SubtaskNext,
    Retrieved,
    ExecError,
    ExecOk,
    Rendered,
    CritiqueFound,
    CritiqueClean,
    VerifyFailed,
    VerifyPassed,
    UserInput,
    Terminator,
    CapExhausted,
    /// An agent or tool failed in a way no retry covers.
    Fault,
}

/// One unit of work in the turn loop: an agent turn or the render tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Planner,
    Retrieval,
    Coding,
    Render,
    Critic,
    Verification,
    UserProxy,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::Planner => "planner",
            Step::Retrieval => "retrieval",
            Step::Coding => "coding",
            Step::Render => "render",
            Step::Critic => "critic",
            Step::Verification => "verification",
            Step::UserProxy => "user_proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrievalKind {
    TaskIntent,
    ErrorMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub chunk_id: u32,
    pub score: f64,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub kind: RetrievalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<u32>,
    pub query: String,
    pub top_chunks: Vec<RetrievedChunk>,
    /// `None` when the index was unavailable and the turn was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    RetrievalUnavailable,
    CapExhausted,
    AgentParse,
    Gateway,
    Render,
    Runtime,
    Internal,
}

/// Written with the first event of every session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInit {
    pub session_id: String,
    pub goal: String,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    PhaseChanged {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<Phase>,
        to: Phase,
        reason: Reason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<Box<SessionInit>>,
    },
    TurnStarted {
        step: Step,
        reason: Reason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subtask: Option<u32>,
    },
    // TurnEnded payloads, one per step.
    Plan {
        subtasks: Vec<Subtask>,
        complete: bool,
    },
    Retrieval(RetrievalRecord),
    Critique(CritiqueRound),
    Verification(VerificationRound),
    RefinementRequest(RefinementRequest),
    AwaitingInput {},
    // ToolCall payloads.
    CodeSubmitted {
        version: u32,
        source: String,
        phase: Phase,
        provoking_input: Provocation,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        retry_of: Option<u32>,
    },
    ToolInvoked {
        tool: String,
        arguments: Value,
    },
    CodeExecuted {
        version: u32,
        outcome: ExecutionOutcome,
    },
    Render(RenderSet),
    ModelCall {
        request: ChatRequest,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<ChatResponse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Error {
        category: ErrorCategory,
        message: String,
        fatal: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        execution_error: Option<ExecutionError>,
    },
    Terminated {
        reason: Reason,
    },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::PhaseChanged { .. } => EventKind::PhaseChanged,
            Payload::TurnStarted { .. } => EventKind::TurnStarted,
            Payload::Plan { .. }
            | Payload::Retrieval(_)
            | Payload::Critique(_)
            | Payload::Verification(_)
            | Payload::RefinementRequest(_)
            | Payload::AwaitingInput {} => EventKind::TurnEnded,
            Payload::CodeSubmitted { .. } | Payload::ToolInvoked { .. } => EventKind::ToolCall,
            Payload::CodeExecuted { .. } => EventKind::CodeExecuted,
            Payload::Render(_) => EventKind::RenderProduced,
            Payload::ModelCall { .. } => EventKind::ModelCall,
            Payload::Error { .. } => EventKind::Error,
            Payload::Terminated { .. } => EventKind::Terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub kind: EventKind,
    pub payload: Payload,
}

impl Event {
    pub fn new(seq: u64, timestamp: DateTime<Utc>, actor: Actor, payload: Payload) -> Self {
        Self { seq, timestamp, actor, kind: payload.kind(), payload }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}
