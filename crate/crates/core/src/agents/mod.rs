//! The six agent roles: prompt templates, tool contracts and reply parsers.

mod ops;
mod parse;
mod prompts;
mod roles;

use std::path::Path;

use meshwright_gateway::{ChatBackend, ChatRequest, ChatResponse, GatewayError};
use thiserror::Error;

use crate::session::{Role, SessionConfig};

pub use ops::{code_step, critique, critique_via_driver, plan, retrieve_and_summarize, verify, RetrievalQuery};
pub use parse::{
    extract_code, first_fenced_block, parse_critique, parse_plan, parse_verification, ParseFailure, PlanEntry,
    PlannerOutput, EXECUTE_CODE_TOOL,
};
pub use prompts::{substitute, PromptSet, Vars, PROMPT_VERSION};
pub use roles::{
    agent_role, critique_scene_tool, execute_code_tool, retrieve_information_tool, role_tools, verify_scene_tool,
    AgentRole, CRITIQUE_SCENE_TOOL, RETRIEVE_INFORMATION_TOOL, VERIFY_SCENE_TOOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{role:?} reply unusable after re-prompt: {detail}")]
    Parse { role: Role, detail: String },
    #[error("{role:?} model call failed: {source}")]
    Gateway { role: Role, source: GatewayError },
    #[error("retrieval unavailable: {0}")]
    RetrievalUnavailable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// One model call as it happened, for the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub request: ChatRequest,
    pub response: Result<ChatResponse, GatewayError>,
}

/// Everything an agent operation needs besides its inputs. Model calls are
/// appended to `calls` whether or not the operation succeeds.
pub struct AgentEnv<'a> {
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptSet,
    pub config: &'a SessionConfig,
    /// Session directory; render paths are relative to it.
    pub attachment_root: Option<&'a Path>,
    pub calls: Vec<CallRecord>,
}

impl<'a> AgentEnv<'a> {
    pub fn new(backend: &'a dyn ChatBackend, prompts: &'a PromptSet, config: &'a SessionConfig) -> Self {
        Self { backend, prompts, config, attachment_root: None, calls: Vec::new() }
    }

    pub fn with_attachment_root(mut self, root: &'a Path) -> Self {
        self.attachment_root = Some(root);
        self
    }

    pub fn take_calls(&mut self) -> Vec<CallRecord> {
        std::mem::take(&mut self.calls)
    }
}
