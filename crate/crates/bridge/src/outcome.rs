use serde::{Deserialize, Serialize};

/// Failure category of one script execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    /// The script raised inside Blender's interpreter.
    ScriptException,
    /// The worker process died while the request was in flight.
    WorkerCrash,
    /// No response within the execution timeout.
    Timeout,
    /// The worker answered with something that is not a valid response.
    ProtocolError,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::ScriptException => "ScriptException",
            ErrorKind::WorkerCrash => "WorkerCrash",
            ErrorKind::Timeout => "Timeout",
            ErrorKind::ProtocolError => "ProtocolError",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ScriptException" => Some(ErrorKind::ScriptException),
            "WorkerCrash" => Some(ErrorKind::WorkerCrash),
            "Timeout" => Some(ErrorKind::Timeout),
            "ProtocolError" => Some(ErrorKind::ProtocolError),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionError {
    pub kind: ErrorKind,
    pub message: String,
    /// Always present for `ScriptException`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traceback: Option<String>,
}

impl ExecutionError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), traceback: None }
    }

    pub fn script(message: impl Into<String>, traceback: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::ScriptException,
            message: message.into(),
            traceback: Some(traceback.into()),
        }
    }

    /// Last `n` non-empty traceback lines, oldest first.
    pub fn traceback_tail(&self, n: usize) -> Vec<&str> {
        let Some(tb) = self.traceback.as_deref() else {
            return Vec::new();
        };
        let lines: Vec<&str> = tb.lines().filter(|l| !l.trim().is_empty()).collect();
        lines[lines.len().saturating_sub(n)..].to_vec()
    }
}

impl std::fmt::Display for ExecutionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message)
    }
}

/// Result of running one script. `ok` is true exactly when `error` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub ok: bool,
    pub stdout: String,
    pub stderr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ExecutionError>,
    pub wall_time_ms: u64,
}

impl ExecutionOutcome {
    pub fn success(stdout: String, stderr: String, wall_time_ms: u64) -> Self {
        Self { ok: true, stdout, stderr, error: None, wall_time_ms }
    }

    pub fn failure(error: ExecutionError, stdout: String, stderr: String, wall_time_ms: u64) -> Self {
        Self { ok: false, stdout, stderr, error: Some(error), wall_time_ms }
    }

    pub fn is_consistent(&self) -> bool {
        self.ok == self.error.is_none()
            && self
                .error
                .as_ref()
                .map_or(true, |e| e.kind != ErrorKind::ScriptException || e.traceback.is_some())
    }
}
