use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;
use crate::types::{ChatBackend, ChatRequest, ChatResponse};

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEntry {
    pub agent: String,
    /// 1-based position among this agent's calls; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
    /// Each must occur somewhere in the request text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub required_substrings: Vec<String>,
    /// Serve this entry for every remaining call of the agent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
    pub response: ChatResponse,
}

impl ScriptedEntry {
    pub fn new(agent: impl Into<String>, response: ChatResponse) -> Self {
        Self { agent: agent.into(), turn_index: None, required_substrings: Vec::new(), repeat: false, response }
    }

    pub fn requiring(mut self, substring: impl Into<String>) -> Self {
        self.required_substrings.push(substring.into());
        self
    }

    pub fn at_turn(mut self, turn_index: usize) -> Self {
        self.turn_index = Some(turn_index);
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTranscript {
    pub entries: Vec<ScriptedEntry>,
}

impl ScriptedTranscript {
    pub fn new(entries: Vec<ScriptedEntry>) -> Self {
        Self { entries }
    }

    /// Accepts either `{"entries": [...]}` or one entry per line.
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        if let Ok(t) = serde_json::from_str::<ScriptedTranscript>(text) {
            return Ok(t);
        }
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line)
                .map_err(|e| GatewayError::Config(format!("transcript line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read transcript {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Default)]
struct Queues {
    by_agent: BTreeMap<String, Vec<ScriptedEntry>>,
    cursor: BTreeMap<String, usize>,
}

/// Serves a [`ScriptedTranscript`], consuming entries strictly in order per
/// agent. Every mismatch is an error, never a silent fallback.
#[derive(Debug)]
pub struct ScriptedBackend {
    queues: Mutex<Queues>,
}

impl ScriptedBackend {
    pub fn new(transcript: ScriptedTranscript) -> Self {
        let mut queues = Queues::default();
        for e in transcript.entries {
            queues.by_agent.entry(e.agent.clone()).or_default().push(e);
        }
        Self { queues: Mutex::new(queues) }
    }

    /// Calls served so far, per agent.
    pub fn calls(&self) -> BTreeMap<String, usize> {
        self.queues.lock().expect("scripted backend poisoned").cursor.clone()
    }

    /// Skips entries already consumed by an earlier process, e.g. when
    /// resuming a persisted session.
    pub fn fast_forward(&self, consumed: &BTreeMap<String, usize>) {
        let mut q = self.queues.lock().expect("scripted backend poisoned");
        for (agent, n) in consumed {
            *q.cursor.entry(agent.clone()).or_default() += n;
        }
    }

    /// Entries not yet served (repeating entries count once).
    pub fn remaining(&self) -> usize {
        let q = self.queues.lock().expect("scripted backend poisoned");
        q.by_agent
            .iter()
            .map(|(agent, entries)| {
                let used = q.cursor.get(agent).copied().unwrap_or(0);
                let sticky = entries.iter().position(|e| e.repeat).map(|p| p + 1).unwrap_or(entries.len());
                sticky.saturating_sub(used)
            })
            .sum()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut q = self.queues.lock().expect("scripted backend poisoned");
        let used = q.cursor.get(&request.agent).copied().unwrap_or(0);
        let call = used + 1;
        let mismatch = |detail: String| GatewayError::FixtureMismatch { agent: request.agent.clone(), call, detail };

        let entries = q.by_agent.get(&request.agent).map(Vec::as_slice).unwrap_or(&[]);
        let entry = match entries.iter().position(|e| e.repeat) {
            Some(p) if used >= p => &entries[p],
            _ => entries.get(used).ok_or_else(|| mismatch("no scripted entry left".into()))?,
        };
        if let Some(t) = entry.turn_index {
            if t != call {
                return Err(mismatch(format!("entry expects turn {t}")));
            }
        }
        let text = request.full_text();
        if let Some(missing) = entry.required_substrings.iter().find(|s| !text.contains(s.as_str())) {
            return Err(mismatch(format!("request lacks required substring {missing:?}")));
        }
        let response = entry.response.clone();
        *q.cursor.entry(request.agent.clone()).or_default() = call;
        Ok(response)
    }
}
