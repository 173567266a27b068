use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("provider returned status {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("fixture mismatch for {agent} call #{call}: {detail}")]
    FixtureMismatch { agent: String, call: usize, detail: String },
    #[error("replay diverged at turn {turn}: {detail}")]
    Divergence { turn: usize, detail: String },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unreadable provider response: {0}")]
    BadResponse(String),
}

impl GatewayError {
    /// Whether a live call may succeed if retried.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Provider { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
