//! Service configuration: defaults < TOML file < `MESHWRIGHT_*` environment
//! < `--set key=value` flags.
//!
//! Keys are dotted paths into [`ServiceConfig`], e.g. `bind`,
//! `session.max_exec_retries` or `session.models.coding.model`. In the
//! environment the dots become double underscores:
//! `MESHWRIGHT_SESSION__MAX_EXEC_RETRIES=3`. `MESHWRIGHT_LOG` is shorthand for
//! `log_level`.

use std::path::{Path, PathBuf};

use meshwright_core::SessionConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "MESHWRIGHT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("bad setting {0:?}: expected key=value")]
    Setting(String),
    #[error("{key}: {message}")]
    Path { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP providers, see `gateway`.
    #[default]
    Live,
    /// A fixture transcript (`transcript`) or a built-in scenario (`scenario`).
    Scripted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeKind {
    /// A supervised headless Blender (or anything speaking its protocol).
    #[default]
    Blender,
    /// The in-process software scene; no renders worth looking at.
    Fake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// One subdirectory per session.
    pub data_dir: PathBuf,
    pub bind: String,
    pub log_level: String,
    pub backend: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Provider table; built-in defaults when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gateway: Option<PathBuf>,
    pub runtime: RuntimeKind,
    pub blender: PathBuf,
    pub shim: PathBuf,
    pub worker_startup_secs: u64,
    /// Continue sessions found mid-run under `data_dir` at startup.
    pub resume_interrupted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rag_index: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    /// Built UI bundle served under `/ui/`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ui_dir: Option<PathBuf>,
    /// Defaults for new sessions; requests may override individual keys.
    pub session: SessionConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("sessions"),
            bind: "127.0.0.1:8420".into(),
            log_level: "info".into(),
            backend: BackendKind::default(),
            transcript: None,
            scenario: None,
            gateway: None,
            runtime: RuntimeKind::default(),
            blender: PathBuf::from("blender"),
            shim: PathBuf::from("worker/shim.py"),
            worker_startup_secs: 60,
            resume_interrupted: true,
            rag_index: None,
            prompts: None,
            ui_dir: None,
            session: SessionConfig::default(),
        }
    }
}

/// Raw TOML scalar for an environment or flag value: anything TOML can read
/// as a value (numbers, booleans, arrays, quoted strings), else the literal
/// text as a string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Path { key: key.into(), message: "empty path segment".into() });
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigError::Path { key: key.into(), message: format!("{p} is not a table") }),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// `MESHWRIGHT_SESSION__M_VIEWS` → `session.m_views`; `None` for variables
/// that are not settings.
pub fn env_key(name: &str) -> Option<String> {
    let rest = name.strip_prefix(ENV_PREFIX)?;
    match rest {
        "" | "CONFIG" => None,
        "LOG" => Some("log_level".into()),
        _ => Some(rest.to_ascii_lowercase().replace("__", ".")),
    }
}

/// Builds the configuration from its layers. `env` is usually
/// `std::env::vars()`.
pub fn layered(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    sets: &[String],
) -> Result<ServiceConfig, ConfigError> {
    let Value::Table(mut root) = Value::try_from(ServiceConfig::default()).map_err(|e| ConfigError::Invalid(e.to_string()))?
    else {
        unreachable!("a struct serializes to a table");
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        merge(&mut root, table);
    }
    let mut env: Vec<(String, String)> = env.into_iter().filter_map(|(k, v)| env_key(&k).map(|k| (k, v))).collect();
    env.sort();
    for (key, raw) in env {
        set_path(&mut root, &key, parse_value(&raw))?;
    }
    for s in sets {
        let (key, raw) = s.split_once('=').ok_or_else(|| ConfigError::Setting(s.clone()))?;
        set_path(&mut root, key.trim(), parse_value(raw.trim()))?;
    }
    let config: ServiceConfig = Value::Table(root).try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backend == BackendKind::Scripted && self.transcript.is_none() && self.scenario.is_none() {
            return Err(ConfigError::Invalid("scripted backend needs `transcript` or `scenario`".into()));
        }
        if self.session.m_views == 0 {
            return Err(ConfigError::Invalid("session.m_views must be at least 1".into()));
        }
        if self.session.termination_keyword.trim().is_empty() {
            return Err(ConfigError::Invalid("session.termination_keyword is empty".into()));
        }
        Ok(())
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.data_dir.join(session_id)
    }
}

/// Applies a JSON object of overrides (same keys as `session.*`) to a
/// session configuration.
pub fn override_session(base: &SessionConfig, overrides: &serde_json::Value) -> Result<SessionConfig, ConfigError> {
    fn merge_json(base: &mut serde_json::Value, over: &serde_json::Value) {
        match (base, over) {
            (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
                for (k, v) in o {
                    merge_json(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
                }
            }
            (b, o) => *b = o.clone(),
        }
    }
    if overrides.is_null() {
        return Ok(base.clone());
    }
    if !overrides.is_object() {
        return Err(ConfigError::Invalid("config overrides must be an object".into()));
    }
    let mut value = serde_json::to_value(base).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let known: Vec<String> = value.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
    if let Some(unknown) = overrides.as_object().and_then(|o| o.keys().find(|k| !known.contains(k))) {
        return Err(ConfigError::Invalid(format!("unknown session setting {unknown:?}")));
    }
    merge_json(&mut value, overrides);
    serde_json::from_value(value).map_err(|e| ConfigError::Invalid(e.to_string()))
}
