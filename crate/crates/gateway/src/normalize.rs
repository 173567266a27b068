use serde::{Deserialize, Serialize};

use crate::types::{ChatRequest, MessageRole};

/// Collapses every whitespace run to one space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The parts of a request replay matching compares: agent, message roles,
/// whitespace-collapsed text, attachment hashes and tool names. Paths,
/// sampling settings and bindings are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedRequest {
    pub agent: String,
    pub messages: Vec<(MessageRole, String, Vec<String>)>,
    pub tools: Vec<String>,
}

impl NormalizedRequest {
    pub fn of(request: &ChatRequest) -> Self {
        Self {
            agent: request.agent.clone(),
            messages: request
                .messages
                .iter()
                .map(|m| (m.role, collapse_whitespace(&m.text), m.attachments.iter().map(|a| a.sha256.clone()).collect()))
                .collect(),
            tools: request.tools.iter().map(|t| t.name.clone()).collect(),
        }
    }

    /// Human-readable description of the first difference, if any.
    pub fn first_difference(&self, other: &Self) -> Option<String> {
        if self.agent != other.agent {
            return Some(format!("agent {:?} != recorded {:?}", other.agent, self.agent));
        }
        if self.tools != other.tools {
            return Some(format!("tools {:?} != recorded {:?}", other.tools, self.tools));
        }
        for (i, (a, b)) in self.messages.iter().zip(&other.messages).enumerate() {
            if a.0 != b.0 {
                return Some(format!("message {} role {:?} != recorded {:?}", i + 1, b.0, a.0));
            }
            if a.1 != b.1 {
                let at = a.1.chars().zip(b.1.chars()).take_while(|(x, y)| x == y).count();
                let snippet: String = b.1.chars().skip(at).take(60).collect();
                return Some(format!("message {} text differs at char {at}: {snippet:?}", i + 1));
            }
            if a.2 != b.2 {
                return Some(format!("message {} attachments differ", i + 1));
            }
        }
        if self.messages.len() != other.messages.len() {
            return Some(format!("{} messages != recorded {}", other.messages.len(), self.messages.len()));
        }
        None
    }
}
