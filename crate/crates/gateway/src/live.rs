use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};
use tracing::{debug, warn};

use crate::config::{GatewayConfig, ProviderConfig};
use crate::error::GatewayError;
use crate::types::{ChatBackend, ChatMessage, ChatRequest, ChatResponse, MessageRole, ToolCall, Usage};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before retry k (0-based) is `base_delay * 2^k`.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 2, base_delay: Duration::from_millis(500) }
    }
}

/// OpenAI-compatible chat-completions client, routed by agent role.
///
/// Uses a blocking HTTP client; call it from a plain thread, not from inside
/// an async runtime.
pub struct LiveBackend {
    config: GatewayConfig,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl LiveBackend {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_retry(config, RetryPolicy::default())
    }

    pub fn with_retry(config: GatewayConfig, retry: RetryPolicy) -> Result<Self, GatewayError> {
        // Already installed is fine.
        let _ = rustls::crypto::ring::default_provider().install_default();
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self { config, client, retry })
    }

    fn attempt(&self, provider: &ProviderConfig, body: &Value) -> Result<ChatResponse, GatewayError> {
        let url = format!("{}/chat/completions", provider.endpoint.trim_end_matches('/'));
        let mut req = self.client.post(&url).timeout(Duration::from_secs(provider.timeout_secs)).json(body);
        if let Some(var) = &provider.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| GatewayError::Config(format!("environment variable {var} is not set")))?;
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = req.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Provider { status: status.as_u16(), message: truncate(&text, 500) });
        }
        let mut parsed = parse_completion(&text)?;
        parsed.latency_ms = started.elapsed().as_millis() as u64;
        Ok(parsed)
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let provider = self.config.provider_for(&request.agent)?;
        let body = request_body(request, &provider.model)?;
        let mut attempt = 0;
        loop {
            match self.attempt(provider, &body) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    warn!(agent = %request.agent, error = %e, ?delay, "retrying model call");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => {
                    debug!(agent = %request.agent, attempts = attempt + 1, "model call failed");
                    return Err(e);
                }
            }
        }
    }
}

fn truncate(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &text[..i]),
        None => text.to_owned(),
    }
}

fn message_json(request: &ChatRequest, m: &ChatMessage) -> Result<Value, GatewayError> {
    let role = match m.role {
        MessageRole::System => "system",
        MessageRole::User => "user",
        MessageRole::Assistant => "assistant",
        // Tool results are folded into user turns; we never echo provider tool-call ids.
        MessageRole::Tool => "user",
    };
    if m.attachments.is_empty() {
        return Ok(json!({"role": role, "content": m.text}));
    }
    let mut parts = vec![json!({"type": "text", "text": m.text})];
    for image in &m.attachments {
        let path = request.resolve_attachment(image);
        let bytes = std::fs::read(&path)
            .map_err(|e| GatewayError::InvalidRequest(format!("cannot read attachment {}: {e}", path.display())))?;
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        parts.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}));
    }
    Ok(json!({"role": role, "content": parts}))
}

/// Builds the JSON body of a chat-completions call.
pub(crate) fn request_body(request: &ChatRequest, model: &str) -> Result<Value, GatewayError> {
    let messages = request.messages.iter().map(|m| message_json(request, m)).collect::<Result<Vec<_>, _>>()?;
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": request.sampling.temperature,
    });
    if let Some(n) = request.sampling.max_tokens {
        body["max_tokens"] = json!(n);
    }
    if !request.tools.is_empty() {
        body["tools"] = request
            .tools
            .iter()
            .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
            .collect();
    }
    Ok(body)
}

pub(crate) fn parse_completion(text: &str) -> Result<ChatResponse, GatewayError> {
    let v: Value = serde_json::from_str(text).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    let message = v
        .pointer("/choices/0/message")
        .ok_or_else(|| GatewayError::BadResponse("no choices[0].message".into()))?;
    let content = match message.get("content") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Array(parts)) => {
            let joined: Vec<&str> = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
            (!joined.is_empty()).then(|| joined.join(""))
        }
        _ => None,
    };
    let mut tool_calls = Vec::new();
    for call in message.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
        let f = call.get("function").unwrap_or(call);
        let name = f.get("name").and_then(Value::as_str).unwrap_or_default().to_owned();
        let arguments = match f.get("arguments") {
            Some(Value::String(s)) => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())),
            Some(other) => other.clone(),
            None => Value::Null,
        };
        tool_calls.push(ToolCall { name, arguments });
    }
    let usage = Usage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    };
    let response = ChatResponse { text: content, tool_calls, usage, latency_ms: 0 };
    if response.is_empty() {
        return Err(GatewayError::BadResponse("neither text nor tool calls".into()));
    }
    Ok(response)
}
