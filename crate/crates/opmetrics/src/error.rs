use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("pattern configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("bad input spec {0:?}: expected [NAME[+rag|-rag]=]PATH")]
    InputSpec(String),
    #[error("event log: {0}")]
    EventLog(String),
}

impl MetricsError {
    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        MetricsError::Io { path: path.display().to_string(), message: err.to_string() }
    }
}
