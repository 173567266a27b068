//! Prompt templates: plain text files with `{name}` placeholders.
//!
//! Substitution is a single left-to-right pass with no escaping: a known
//! placeholder is replaced by its value verbatim (values are never rescanned),
//! anything else in braces is left as is.

use std::collections::BTreeMap;
use std::path::Path;

use crate::session::Role;

use super::AgentError;

/// Bumped whenever a shipped template changes wording.
pub const PROMPT_VERSION: &str = "1";

const SHIPPED: [(&str, &str); 12] = [
    ("planner.system", include_str!("../../prompts/planner.system.txt")),
    ("planner.user", include_str!("../../prompts/planner.user.txt")),
    ("retrieval.system", include_str!("../../prompts/retrieval.system.txt")),
    ("retrieval.user", include_str!("../../prompts/retrieval.user.txt")),
    ("coding.system", include_str!("../../prompts/coding.system.txt")),
    ("coding.user", include_str!("../../prompts/coding.user.txt")),
    ("critic.system", include_str!("../../prompts/critic.system.txt")),
    ("critic.user", include_str!("../../prompts/critic.user.txt")),
    ("critic_driver.user", include_str!("../../prompts/critic_driver.user.txt")),
    ("verification.system", include_str!("../../prompts/verification.system.txt")),
    ("verification.user", include_str!("../../prompts/verification.user.txt")),
    ("verification_driver.user", include_str!("../../prompts/verification_driver.user.txt")),
];

pub type Vars<'a> = BTreeMap<&'a str, String>;

pub fn substitute(template: &str, vars: &Vars<'_>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(after.len());
        let name = &after[..name_len];
        match (after[name_len..].starts_with('}'), vars.get(name)) {
            (true, Some(value)) if !name.is_empty() => {
                out.push_str(value);
                rest = &after[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::shipped()
    }
}

impl PromptSet {
    pub fn shipped() -> Self {
        Self { templates: SHIPPED.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Shipped templates overridden by any `<name>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, AgentError> {
        let mut set = Self::shipped();
        for name in SHIPPED.iter().map(|(k, _)| *k) {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| AgentError::Precondition(format!("cannot read {}: {e}", path.display())))?;
                set.templates.insert(name.to_owned(), text);
            }
        }
        Ok(set)
    }

    pub fn set(&mut self, name: &str, text: impl Into<String>) {
        self.templates.insert(name.to_owned(), text.into());
    }

    pub fn get(&self, name: &str) -> &str {
        self.templates.get(name).map(String::as_str).unwrap_or_default()
    }

    pub fn render(&self, name: &str, vars: &Vars<'_>) -> String {
        substitute(self.get(name), vars)
    }

    /// System prompt of a role, trailing newline removed. The user proxy has none.
    pub fn system_prompt(&self, role: Role) -> Option<String> {
        role.uses_model().then(|| self.get(&format!("{}.system", role.key())).trim_end().to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass_and_unknown_braces() {
        let vars: Vars = [("goal", "a {code} chair".to_owned()), ("code", "x".to_owned())].into();
        assert_eq!(substitute("{goal} / {code} / {other} / {", &vars), "a {code} chair / x / {other} / {");
        assert_eq!(substitute("dict = {'a': 1}", &vars), "dict = {'a': 1}");
    }
}
