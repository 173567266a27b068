use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// The pattern file shipped with the crate.
pub const DEFAULT_PATTERNS: &str = include_str!("../patterns.ndjson");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpClass {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchRule {
    /// The identifier starts with the pattern.
    Prefix,
    /// The pattern occurs anywhere in the identifier.
    Contains,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpPattern {
    pub pattern: String,
    pub rule: MatchRule,
    pub class: OpClass,
    #[serde(default)]
    pub rationale: String,
}

impl OpPattern {
    /// Length of the match against `call`, if any. Matches must end on a
    /// segment boundary unless the pattern itself ends mid-segment (`_`, `.`),
    /// so `.co` matches `*.co.x` but not `*.count`.
    pub fn match_len(&self, call: &str) -> Option<usize> {
        let p = self.pattern.as_str();
        let open_ended = p.ends_with(['_', '.', '[', ']']);
        let boundary_after = |end: usize| open_ended || end == call.len() || call[end..].starts_with(['.', '[']);
        let boundary_before = |start: usize| {
            start == 0 || p.starts_with(['.', '[']) || call[..start].ends_with(['.', '*', ']'])
        };
        let hit = match self.rule {
            MatchRule::Prefix => call.starts_with(p) && boundary_after(p.len()),
            MatchRule::Contains => {
                call.match_indices(p).any(|(start, _)| boundary_before(start) && boundary_after(start + p.len()))
            }
        };
        hit.then_some(p.len())
    }
}

/// A validated pattern list.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    patterns: Vec<OpPattern>,
}

impl PatternSet {
    pub fn new(patterns: Vec<OpPattern>) -> Result<Self, MetricsError> {
        let mut seen: BTreeMap<(String, bool), OpClass> = BTreeMap::new();
        let mut kept = Vec::with_capacity(patterns.len());
        for p in patterns {
            if p.pattern.trim().is_empty() {
                return Err(MetricsError::Config("empty pattern".into()));
            }
            let key = (p.pattern.clone(), p.rule == MatchRule::Prefix);
            match seen.get(&key) {
                Some(class) if *class != p.class => {
                    return Err(MetricsError::Config(format!(
                        "pattern {:?} is listed as both {:?} and {:?}",
                        p.pattern, class, p.class
                    )));
                }
                Some(_) => continue,
                None => {
                    seen.insert(key, p.class);
                    kept.push(p);
                }
            }
        }
        Ok(Self { patterns: kept })
    }

    /// Parses NDJSON, one [`OpPattern`] per non-blank line.
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut patterns = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: OpPattern = serde_json::from_str(line)
                .map_err(|e| MetricsError::Config(format!("pattern line {}: {e}", n + 1)))?;
            patterns.push(p);
        }
        Self::new(patterns)
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|e| MetricsError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn shipped() -> Self {
        Self::parse(DEFAULT_PATTERNS).expect("shipped pattern file is valid")
    }

    pub fn patterns(&self) -> &[OpPattern] {
        &self.patterns
    }

    /// The winning pattern for `call`: longest match, then prefix over
    /// contains, then file order.
    pub fn best_match(&self, call: &str) -> Option<&OpPattern> {
        let mut best: Option<(&OpPattern, usize)> = None;
        for p in &self.patterns {
            let Some(len) = p.match_len(call) else { continue };
            let better = match best {
                None => true,
                Some((b, blen)) => len > blen || (len == blen && p.rule == MatchRule::Prefix && b.rule != MatchRule::Prefix),
            };
            if better {
                best = Some((p, len));
            }
        }
        best.map(|(p, _)| p)
    }
}

/// Unique identifiers per class; a call lands in exactly one set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub simple_ops: BTreeSet<String>,
    pub complex_ops: BTreeSet<String>,
    pub unmatched_calls: BTreeSet<String>,
}

pub fn classify<'a>(calls: impl IntoIterator<Item = &'a String>, patterns: &PatternSet) -> Classification {
    let mut out = Classification::default();
    for call in calls {
        let bucket = match patterns.best_match(call).map(|p| p.class) {
            Some(OpClass::Simple) => &mut out.simple_ops,
            Some(OpClass::Complex) => &mut out.complex_ops,
            None => &mut out.unmatched_calls,
        };
        bucket.insert(call.clone());
    }
    out
}
