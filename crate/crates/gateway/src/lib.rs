//! Uniform chat-completion interface for the agents.
//!
//! Three backends implement [`ChatBackend`]:
//!
//! - [`LiveBackend`] talks to OpenAI-compatible HTTP endpoints, one provider
//!   binding per agent role.
//! - [`ScriptedBackend`] serves hand-written fixture transcripts, strictly in
//!   order per role, failing loudly on any mismatch.
//! - [`ReplayBackend`] serves the calls recorded in a previous session and
//!   reports the first request that diverges from the recording.

mod config;
mod error;
mod live;
mod normalize;
mod replay;
mod scripted;
mod types;

pub use config::{GatewayConfig, ProviderConfig};
pub use error::GatewayError;
pub use live::{LiveBackend, RetryPolicy};
pub use normalize::{collapse_whitespace, NormalizedRequest};
pub use replay::{RecordedCall, ReplayBackend};
pub use scripted::{ScriptedBackend, ScriptedEntry, ScriptedTranscript};
pub use types::{
    ChatBackend, ChatMessage, ChatRequest, ChatResponse, ImageRef, MessageRole, ModelBinding, Sampling, ToolCall,
    ToolSpec, Usage,
};
