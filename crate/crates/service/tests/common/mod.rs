#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use meshwright::config::{BackendKind, RuntimeKind};
use meshwright::{Environment, ServiceConfig, SessionHost};

/// Scripted chair session over the in-process scene.
pub fn scripted_config(data_dir: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: data_dir.to_path_buf(),
        backend: BackendKind::Scripted,
        scenario: Some("chair".into()),
        runtime: RuntimeKind::Fake,
        ..ServiceConfig::default()
    }
}

pub fn host(config: ServiceConfig) -> Arc<SessionHost> {
    Arc::new(SessionHost::open(Environment::new(config).unwrap()).unwrap())
}

/// `data:` payloads of a server-sent event body, one per frame.
pub fn sse_data(body: &str) -> Vec<String> {
    body.split("\n\n")
        .filter_map(|frame| {
            let lines: Vec<&str> = frame.lines().filter_map(|l| l.strip_prefix("data:")).map(|l| l.strip_prefix(' ').unwrap_or(l)).collect();
            (!lines.is_empty()).then(|| lines.join("\n"))
        })
        .collect()
}
