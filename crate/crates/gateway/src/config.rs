use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;
use crate::types::ModelBinding;

/// Where one agent role's calls go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider: String,
    pub model: String,
    /// Base URL of an OpenAI-compatible API; `/chat/completions` is appended.
    pub endpoint: String,
    /// Environment variable holding the API key. Keys never live in files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

impl ProviderConfig {
    pub fn binding(&self) -> ModelBinding {
        ModelBinding { provider: self.provider.clone(), model: self.model.clone() }
    }
}

/// Agent role name → provider binding.
///
/// ```toml
/// [roles.coding]
/// provider = "anthropic"
/// model = "claude-3-7-sonnet-latest"
/// endpoint = "https://api.anthropic.com/v1"
/// api_key_env = "ANTHROPIC_API_KEY"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default)]
    pub roles: BTreeMap<String, ProviderConfig>,
}

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// General model for planning and retrieval, a code model for coding,
    /// a vision model for critique and verification.
    pub fn defaults() -> Self {
        let openai = |model: &str| ProviderConfig {
            provider: "openai".into(),
            model: model.into(),
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout_secs: default_timeout_secs(),
        };
        let anthropic = ProviderConfig {
            provider: "anthropic".into(),
            model: "claude-3-7-sonnet-latest".into(),
            endpoint: "https://api.anthropic.com/v1".into(),
            api_key_env: Some("ANTHROPIC_API_KEY".into()),
            timeout_secs: default_timeout_secs(),
        };
        let gemini = ProviderConfig {
            provider: "google".into(),
            model: "gemini-2.0-flash".into(),
            endpoint: "https://generativelanguage.googleapis.com/v1beta/openai".into(),
            api_key_env: Some("GEMINI_API_KEY".into()),
            timeout_secs: default_timeout_secs(),
        };
        let mut roles = BTreeMap::new();
        roles.insert("planner".into(), openai("gpt-4o"));
        roles.insert("retrieval".into(), openai("gpt-4o"));
        roles.insert("coding".into(), anthropic);
        roles.insert("critic".into(), gemini.clone());
        roles.insert("verification".into(), gemini.clone());
        // driver models used when critique runs through a VLM tool
        roles.insert("critic_driver".into(), openai("gpt-4o"));
        roles.insert("verification_driver".into(), openai("gpt-4o"));
        Self { roles }
    }

    pub fn provider_for(&self, agent: &str) -> Result<&ProviderConfig, GatewayError> {
        self.roles.get(agent).ok_or_else(|| GatewayError::Config(format!("no provider configured for role {agent:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_role_table() {
        let cfg = GatewayConfig::parse(
            r#"
            [roles.coding]
            provider = "local"
            model = "qwen"
            endpoint = "http://127.0.0.1:8000/v1"
            "#,
        )
        .unwrap();
        let p = cfg.provider_for("coding").unwrap();
        assert_eq!(p.model, "qwen");
        assert_eq!(p.api_key_env, None);
        assert_eq!(p.timeout_secs, 120);
        assert!(cfg.provider_for("critic").is_err());
    }

    #[test]
    fn defaults_cover_every_model_role() {
        let cfg = GatewayConfig::defaults();
        for role in ["planner", "retrieval", "coding", "critic", "verification"] {
            assert!(cfg.provider_for(role).is_ok(), "{role}");
        }
        assert_eq!(cfg.roles["planner"].model, "gpt-4o");
        assert!(cfg.roles.values().all(|p| p.api_key_env.is_some()));
    }
}
