//! Line-oriented parsers for agent replies.

use std::sync::LazyLock;

use meshwright_gateway::ChatResponse;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::session::{Critique, Role, VerificationItem, VerificationStatus};

static PLAN_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\w+)\s*:\s*(.+)$").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\**\s*(\d+)\s*[.)]\s*(.*)$").unwrap());
static STATUS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s*_]*(unresolved|partially|partial|resolved)\b[\s*_]*(?:[:\-–—]\s*)?(.*)$").unwrap()
});
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*```").unwrap());

pub const EXECUTE_CODE_TOOL: &str = "execute_code_tool";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub assignee: Role,
    pub task: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub entries: Vec<PlanEntry>,
    pub complete: bool,
}

impl PlannerOutput {
    /// Entries that become subtasks: those delegated to retrieval or coding.
    pub fn work_items(&self) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(|e| matches!(e.assignee, Role::Retrieval | Role::Coding))
    }
}

fn is_terminator_token(word: &str, keyword: &str) -> bool {
    word.trim_matches(|c: char| !c.is_alphanumeric() && c != '_') == keyword
}

/// `<agent>:<task>` lines with a known agent name become entries; other lines
/// are ignored. The terminator is an exact, case-sensitive token on a
/// non-entry line (surrounding quotes and punctuation allowed).
pub fn parse_plan(text: &str, keyword: &str) -> PlannerOutput {
    let mut out = PlannerOutput::default();
    for line in text.lines() {
        let stripped = line.trim().trim_start_matches(['-', '*', '•']).trim_start();
        let stripped = NUMBERED.captures(stripped).map_or(stripped, |c| c.get(2).unwrap().as_str());
        let stripped = stripped.replace("**", "");
        if let Some(c) = PLAN_LINE.captures(&stripped) {
            if let Some(role) = Role::from_agent_name(&c[1]) {
                let task = c[2].trim().to_owned();
                if !task.is_empty() {
                    out.entries.push(PlanEntry { assignee: role, task });
                    continue;
                }
            }
        }
        if line.split_whitespace().any(|w| is_terminator_token(w, keyword)) {
            out.complete = true;
        }
    }
    out
}

/// Script from an `execute_code_tool` call (exact argument bytes), otherwise
/// the first fenced block in the text.
pub fn extract_code(response: &ChatResponse) -> Option<String> {
    for call in &response.tool_calls {
        if call.name == EXECUTE_CODE_TOOL {
            let code = match &call.arguments {
                serde_json::Value::Object(m) => m.get("code").and_then(|v| v.as_str()).map(str::to_owned),
                serde_json::Value::String(s) => serde_json::from_str::<serde_json::Value>(s)
                    .ok()
                    .and_then(|v| v.get("code").and_then(|c| c.as_str()).map(str::to_owned)),
                _ => None,
            };
            if let Some(code) = code.filter(|c| !c.trim().is_empty()) {
                return Some(code);
            }
        }
    }
    response.text.as_deref().and_then(first_fenced_block)
}

pub fn first_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.split_inclusive('\n');
    lines.find(|l| FENCE.is_match(l))?;
    let mut body = String::new();
    for line in lines {
        if FENCE.is_match(line) {
            return (!body.trim().is_empty()).then_some(body);
        }
        body.push_str(line);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure(pub String);

/// Groups numbered items, folding unnumbered continuation lines into the
/// preceding item.
fn numbered_items(text: &str) -> Vec<(u32, String)> {
    let mut items: Vec<(u32, String)> = Vec::new();
    for line in text.lines() {
        if let Some(c) = NUMBERED.captures(line) {
            items.push((c[1].parse().unwrap_or(0), c[2].trim().to_owned()));
        } else if let Some(last) = items.last_mut() {
            if !line.trim().is_empty() {
                last.1.push(' ');
                last.1.push_str(line.trim());
            }
        }
    }
    items
}

/// Numbered `problem: … | fix: … [| subtask: N]` items, or `NO ISSUES` for
/// approval. Items are renumbered 1..n in reply order.
pub fn parse_critique(text: &str) -> Result<Vec<Critique>, ParseFailure> {
    let items = numbered_items(text);
    if items.is_empty() {
        return if text.to_ascii_uppercase().contains("NO ISSUES") {
            Ok(Vec::new())
        } else {
            Err(ParseFailure("no numbered `problem: … | fix: …` items and no NO ISSUES".into()))
        };
    }
    let mut out = Vec::with_capacity(items.len());
    for (pos, (n, body)) in items.iter().enumerate() {
        let (mut problem, mut fix, mut subtask) = (None, None, None);
        for field in body.split('|') {
            let Some((key, value)) = field.split_once(':') else { continue };
            let value = value.trim().trim_matches('*').trim();
            match key.trim().trim_matches('*').trim().to_ascii_lowercase().as_str() {
                "problem" | "issue" => problem = Some(value.to_owned()),
                "fix" | "suggested fix" | "solution" => fix = Some(value.to_owned()),
                "subtask" => subtask = value.trim_start_matches('#').parse().ok(),
                _ => {}
            }
        }
        match (problem.filter(|p| !p.is_empty()), fix.filter(|f| !f.is_empty())) {
            (Some(problem), Some(suggested_fix)) => out.push(Critique {
                index: pos as u32 + 1,
                problem,
                suggested_fix,
                related_subtask: subtask,
            }),
            _ => return Err(ParseFailure(format!("item {n} lacks a problem or a fix"))),
        }
    }
    Ok(out)
}

/// One status marker per critique, in order. A missing follow-up falls back
/// to the critique's own fix.
pub fn parse_verification(text: &str, critiques: &[Critique]) -> Result<Vec<VerificationItem>, ParseFailure> {
    let mut statuses = Vec::new();
    for (n, body) in numbered_items(text) {
        let Some(c) = STATUS.captures(&body) else {
            return Err(ParseFailure(format!("item {n} has no RESOLVED/PARTIAL/UNRESOLVED marker")));
        };
        let status = match c[1].to_ascii_lowercase().as_str() {
            "resolved" => VerificationStatus::Resolved,
            "unresolved" => VerificationStatus::Unresolved,
            _ => VerificationStatus::Partial,
        };
        statuses.push((status, c[2].trim().to_owned()));
    }
    if statuses.len() != critiques.len() {
        return Err(ParseFailure(format!("expected {} verification items, found {}", critiques.len(), statuses.len())));
    }
    Ok(statuses
        .into_iter()
        .zip(critiques)
        .map(|((status, rest), critique)| VerificationItem {
            critique_index: critique.index,
            status,
            followup_instruction: (status != VerificationStatus::Resolved)
                .then(|| if rest.is_empty() { critique.suggested_fix.clone() } else { rest }),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminator_is_case_sensitive() {
        assert!(parse_plan("\"COMPLETE\".", "COMPLETE").complete);
        assert!(!parse_plan("complete", "COMPLETE").complete);
        assert!(!parse_plan("INCOMPLETE", "COMPLETE").complete);
    }

    #[test]
    fn plan_lines_with_markup() {
        let p = parse_plan("1. **coding_agent**: make legs\n- Retrieval_Agent : find docs\nfoo: bar", "COMPLETE");
        assert_eq!(p.entries.len(), 2);
        assert_eq!(p.entries[1].assignee, Role::Retrieval);
    }

    #[test]
    fn fence_content_exact() {
        assert_eq!(first_fenced_block("x\n```python\nimport bpy\n\nbpy.ops.a()\n```\n```\nno\n```").unwrap(), "import bpy\n\nbpy.ops.a()\n");
        assert_eq!(first_fenced_block("```\nunterminated"), None);
    }
}
