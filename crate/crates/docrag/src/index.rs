//! BM25 index over documentation chunks.

use std::collections::{BTreeMap, HashMap};

use meshwright_bridge::{ErrorKind, ExecutionError};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::chunk::DocChunk;
use crate::error::DocragError;
use crate::tokenize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub chunk_id: u32,
    pub score: f64,
}

/// Anything that answers documentation queries. The BM25 index is the only
/// shipped implementation; embedding retrievers would plug in here.
pub trait Retriever: Send + Sync {
    fn query(&self, text: &str, k: usize) -> Result<Vec<Hit>, DocragError>;
    /// Query built from a failed execution; only script errors qualify.
    fn error_query(&self, error: &ExecutionError, k: usize) -> Result<Vec<Hit>, DocragError>;
    fn chunk(&self, chunk_id: u32) -> Option<&DocChunk>;
    fn version_tag(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the chunk in `chunks`.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    pub(crate) chunks: Vec<DocChunk>,
    pub(crate) postings: BTreeMap<String, Vec<Posting>>,
    pub(crate) doc_lengths: Vec<u32>,
    pub(crate) avg_dl: f64,
    pub(crate) params: Bm25Params,
    pub(crate) version_tag: String,
    by_id: HashMap<u32, u32>,
}

impl RetrievalIndex {
    pub fn build(chunks: Vec<DocChunk>) -> Result<Self, DocragError> {
        Self::build_with(chunks, Bm25Params::default())
    }

    pub fn build_with(chunks: Vec<DocChunk>, params: Bm25Params) -> Result<Self, DocragError> {
        if chunks.is_empty() {
            return Err(DocragError::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(chunks.len());
        for (doc, chunk) in chunks.iter().enumerate() {
            let tokens = tokenize(&chunk.body);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push(Posting { doc: doc as u32, tf: n });
            }
        }
        let version_tag = chunks[0].version_tag.clone();
        Self::from_parts(chunks, postings, doc_lengths, params, version_tag)
    }

    pub(crate) fn from_parts(
        chunks: Vec<DocChunk>,
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: Vec<u32>,
        params: Bm25Params,
        version_tag: String,
    ) -> Result<Self, DocragError> {
        if chunks.len() != doc_lengths.len() {
            return Err(DocragError::Format("doc length table does not match chunk count".into()));
        }
        let mut by_id = HashMap::with_capacity(chunks.len());
        for (i, c) in chunks.iter().enumerate() {
            if by_id.insert(c.chunk_id, i as u32).is_some() {
                return Err(DocragError::Format(format!("duplicate chunk id {}", c.chunk_id)));
            }
        }
        if let Some((term, _)) = postings.iter().find(|(_, ps)| ps.iter().any(|p| p.doc as usize >= chunks.len())) {
            return Err(DocragError::Format(format!("posting for {term:?} points past the chunk table")));
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_dl = total as f64 / chunks.len() as f64;
        Ok(Self { chunks, postings, doc_lengths, avg_dl, params, version_tag, by_id })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[DocChunk] {
        &self.chunks
    }

    pub fn avg_dl(&self) -> f64 {
        self.avg_dl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_length(&self, chunk_id: u32) -> Option<u32> {
        self.by_id.get(&chunk_id).map(|&i| self.doc_lengths[i as usize])
    }

    /// Lucene-style idf, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings(term).len() as f64;
        let big_n = self.chunks.len() as f64;
        ((big_n - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// Scores a bag of query terms; repeated terms count repeatedly.
    pub fn score_terms(&self, terms: &[String], k: usize) -> Vec<Hit> {
        let Bm25Params { k1, b } = self.params;
        let mut bag: BTreeMap<&str, usize> = BTreeMap::new();
        for t in terms {
            *bag.entry(t.as_str()).or_default() += 1;
        }
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for (term, qtf) in bag {
            let idf = self.idf(term);
            for p in self.postings(term) {
                let tf = p.tf as f64;
                let dl = self.doc_lengths[p.doc as usize] as f64;
                let w = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avg_dl));
                *scores.entry(p.doc).or_default() += qtf as f64 * w;
            }
        }
        let mut hits: Vec<Hit> =
            scores.into_iter().map(|(doc, score)| Hit { chunk_id: self.chunks[doc as usize].chunk_id, score }).collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.chunk_id.cmp(&b.chunk_id)));
        hits.truncate(k);
        hits
    }

    pub fn query(&self, text: &str, k: usize) -> Result<Vec<Hit>, DocragError> {
        if text.trim().is_empty() {
            return Err(DocragError::Precondition("query text is empty".into()));
        }
        if k == 0 {
            return Err(DocragError::Precondition("k must be at least 1".into()));
        }
        Ok(self.score_terms(&tokenize(text), k))
    }

    /// Queries with an execution error: its message plus the last three
    /// traceback lines, with quoted identifiers counted three times.
    pub fn error_query(&self, error: &ExecutionError, k: usize) -> Result<Vec<Hit>, DocragError> {
        if error.kind != ErrorKind::ScriptException {
            return Err(DocragError::Precondition(format!(
                "{} is not a script error; documentation cannot help",
                error.kind.as_str()
            )));
        }
        let text = error_query_text(error);
        if k == 0 {
            return Err(DocragError::Precondition("k must be at least 1".into()));
        }
        let terms = error_query_terms(&text);
        if terms.is_empty() {
            return Err(DocragError::Precondition("error message is empty".into()));
        }
        Ok(self.score_terms(&terms, k))
    }
}

/// `message` followed by the traceback tail, one per line.
pub fn error_query_text(error: &ExecutionError) -> String {
    let mut text = error.message.clone();
    for line in error.traceback_tail(3) {
        text.push('\n');
        text.push_str(line.trim());
    }
    text
}

/// Spans inside `"…"`, `'…'` or `` `…` `` that contain no other quote
/// character, so `'key "Specular" not found'` yields `Specular`.
pub fn quoted_spans(text: &str) -> Vec<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#""([^"'`\n]+)"|'([^"'`\n]+)'|`([^"'`\n]+)`"#).unwrap());
    re.captures_iter(text).filter_map(|c| c.get(1).or(c.get(2)).or(c.get(3)).map(|m| m.as_str())).collect()
}

/// Token bag for an error query: every token once, plus two extra copies of
/// each quoted span's tokens.
pub fn error_query_terms(text: &str) -> Vec<String> {
    let mut terms = tokenize(text);
    for span in quoted_spans(text) {
        let toks = tokenize(span);
        terms.extend(toks.iter().cloned());
        terms.extend(toks);
    }
    terms
}

impl Retriever for RetrievalIndex {
    fn query(&self, text: &str, k: usize) -> Result<Vec<Hit>, DocragError> {
        RetrievalIndex::query(self, text, k)
    }

    fn error_query(&self, error: &ExecutionError, k: usize) -> Result<Vec<Hit>, DocragError> {
        RetrievalIndex::error_query(self, error, k)
    }

    fn chunk(&self, chunk_id: u32) -> Option<&DocChunk> {
        self.by_id.get(&chunk_id).map(|&i| &self.chunks[i as usize])
    }

    fn version_tag(&self) -> &str {
        &self.version_tag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: u32, body: &str) -> DocChunk {
        DocChunk {
            chunk_id: id,
            source_file: "f.txt".into(),
            title: "t".into(),
            body: body.into(),
            version_tag: "4.4".into(),
            offset: 0,
            overlap: 0,
        }
    }

    #[test]
    fn single_chunk_stats() {
        let idx = RetrievalIndex::build(vec![chunk(0, "bmesh.new creates a mesh")]).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.avg_dl(), 6.0);
        assert_eq!(idx.postings("bmesh").len(), 1);
        assert_eq!(idx.postings("bmesh.new").len(), 1);
    }

    #[test]
    fn unique_term_ranks_first_and_absent_terms_match_nothing() {
        let idx = RetrievalIndex::build(vec![
            chunk(0, "shader nodes and materials"),
            chunk(1, "geometry nodes"),
            chunk(2, "the zygomorphic flower"),
        ])
        .unwrap();
        let hits = idx.query("zygomorphic", 3).unwrap();
        assert_eq!(hits[0].chunk_id, 2);
        assert!(hits[0].score > 0.0);
        assert_eq!(hits.len(), 1);
        assert!(idx.query("quaternion", 3).unwrap().is_empty());
        assert!(idx.query("  ", 3).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let idx = RetrievalIndex::build(vec![chunk(7, "cube"), chunk(3, "cube"), chunk(5, "sphere")]).unwrap();
        let ids: Vec<u32> = idx.query("cube", 5).unwrap().iter().map(|h| h.chunk_id).collect();
        assert_eq!(ids, [3, 7]);
    }

    #[test]
    fn error_query_rejects_non_script_errors() {
        let idx = RetrievalIndex::build(vec![chunk(0, "x")]).unwrap();
        let e = ExecutionError::new(ErrorKind::Timeout, "no response");
        assert!(matches!(idx.error_query(&e, 3), Err(DocragError::Precondition(_))));
    }

    #[test]
    fn quoted_spans_prefer_innermost() {
        assert_eq!(quoted_spans(r#"KeyError: 'key "Specular" not found'"#), ["Specular"]);
        assert_eq!(quoted_spans("name 'bmesh' is not defined"), ["bmesh"]);
        let terms = error_query_terms("key \"Specular\" not found");
        assert_eq!(terms.iter().filter(|t| *t == "specular").count(), 3);
    }
}
