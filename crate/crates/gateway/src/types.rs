use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
    Tool,
}

/// An image attachment, referenced by path and identified by content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    /// Relative to the request's attachment root when not absolute.
    pub path: PathBuf,
    pub sha256: String,
}

impl ImageRef {
    /// Hashes the file at `root.join(path)`.
    pub fn from_file(root: &std::path::Path, path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let bytes = std::fs::read(root.join(&path))?;
        Ok(Self { path, sha256: hex::encode(Sha256::digest(&bytes)) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<ImageRef>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: MessageRole::System, text: text.into(), attachments: Vec::new() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: MessageRole::User, text: text.into(), attachments: Vec::new() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, text: text.into(), attachments: Vec::new() }
    }

    pub fn tool(text: impl Into<String>) -> Self {
        Self { role: MessageRole::Tool, text: text.into(), attachments: Vec::new() }
    }

    pub fn with_attachments(mut self, attachments: Vec<ImageRef>) -> Self {
        self.attachments = attachments;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON schema of the arguments object.
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelBinding {
    pub provider: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Agent role issuing the call, e.g. `coding`. Selects the provider
    /// binding and the scripted fixture queue.
    pub agent: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub binding: ModelBinding,
    #[serde(default)]
    pub sampling: Sampling,
    /// Directory relative attachment paths resolve against. Not recorded.
    #[serde(skip)]
    pub attachment_root: Option<PathBuf>,
}

impl ChatRequest {
    pub fn new(agent: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            agent: agent.into(),
            messages,
            tools: Vec::new(),
            binding: ModelBinding::default(),
            sampling: Sampling::default(),
            attachment_root: None,
        }
    }

    /// Checks the structural invariants: system message first, images only on
    /// user messages.
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            Some(m) if m.role == MessageRole::System => {}
            _ => return Err(GatewayError::InvalidRequest("first message must be the system prompt".into())),
        }
        if let Some(m) = self.messages.iter().find(|m| m.role != MessageRole::User && !m.attachments.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("{:?} message carries attachments", m.role)));
        }
        Ok(())
    }

    /// All message text joined with newlines; what fixture substring checks see.
    pub fn full_text(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.text.as_str()).collect();
        parts.join("\n")
    }

    pub fn resolve_attachment(&self, image: &ImageRef) -> PathBuf {
        match &self.attachment_root {
            Some(root) if image.path.is_relative() => root.join(&image.path),
            _ => image.path.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Value,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub latency_ms: u64,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: Some(text.into()), ..Self::default() }
    }

    pub fn tool_call(name: impl Into<String>, arguments: serde_json::Value) -> Self {
        Self { tool_calls: vec![ToolCall { name: name.into(), arguments }], ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_none() && self.tool_calls.is_empty()
    }
}

/// A chat-completion backend. Implementations serialize internally and may be
/// shared across threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }
}
