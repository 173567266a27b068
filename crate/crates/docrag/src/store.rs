//! On-disk index layout.
//!
//! ```text
//! <dir>/chunks.ndjson   one DocChunk per line, in index order
//! <dir>/meta.json       parameters, version tag, corpus statistics
//! <dir>/postings.bin    little-endian:
//!     magic "MWPI" | u32 format version | u32 chunk count | u32 term count
//!     u32 doc length × chunk count
//!     term table, terms in byte order, each:
//!         u32 term byte length | term UTF-8 bytes | u32 posting count | u64 run offset
//!     postings runs, each posting: u32 chunk position | u32 term frequency
//! ```
//! Run offsets count bytes from the start of the postings-run section.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunk::DocChunk;
use crate::error::DocragError;
use crate::index::{Bm25Params, Posting, RetrievalIndex};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MWPI";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub k1: f64,
    pub b: f64,
    pub version_tag: String,
    pub chunk_count: usize,
    pub term_count: usize,
    pub avg_dl: f64,
}

impl RetrievalIndex {
    pub fn meta(&self) -> IndexMeta {
        IndexMeta {
            format_version: FORMAT_VERSION,
            k1: self.params.k1,
            b: self.params.b,
            version_tag: self.version_tag.clone(),
            chunk_count: self.chunks.len(),
            term_count: self.postings.len(),
            avg_dl: self.avg_dl,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), DocragError> {
        std::fs::create_dir_all(dir).map_err(|e| DocragError::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| DocragError::io(&p, e))
        };

        let mut chunks = Vec::new();
        for c in &self.chunks {
            serde_json::to_writer(&mut chunks, c).expect("chunks serialize");
            chunks.push(b'\n');
        }
        write("chunks.ndjson", &chunks)?;
        write("meta.json", serde_json::to_string_pretty(&self.meta()).expect("meta serializes").as_bytes())?;
        write("postings.bin", &self.encode_postings())
    }

    fn encode_postings(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.chunks.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.postings.len() as u32).to_le_bytes());
        for l in &self.doc_lengths {
            out.extend_from_slice(&l.to_le_bytes());
        }
        let mut runs = Vec::new();
        for (term, ps) in &self.postings {
            out.extend_from_slice(&(term.len() as u32).to_le_bytes());
            out.extend_from_slice(term.as_bytes());
            out.extend_from_slice(&(ps.len() as u32).to_le_bytes());
            out.extend_from_slice(&(runs.len() as u64).to_le_bytes());
            for p in ps {
                runs.write_all(&p.doc.to_le_bytes()).unwrap();
                runs.write_all(&p.tf.to_le_bytes()).unwrap();
            }
        }
        out.extend_from_slice(&runs);
        out
    }

    pub fn load(dir: &Path) -> Result<Self, DocragError> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| DocragError::io(&p, e))
        };
        let meta: IndexMeta = serde_json::from_slice(&read("meta.json")?)
            .map_err(|e| DocragError::Format(format!("meta.json: {e}")))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(DocragError::Format(format!("unsupported format version {}", meta.format_version)));
        }
        let text = String::from_utf8(read("chunks.ndjson")?)
            .map_err(|_| DocragError::Format("chunks.ndjson is not UTF-8".into()))?;
        let chunks = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str::<DocChunk>(l)
                    .map_err(|e| DocragError::Format(format!("chunks.ndjson line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (doc_lengths, postings) = decode_postings(&read("postings.bin")?)?;
        if chunks.len() != meta.chunk_count || postings.len() != meta.term_count {
            return Err(DocragError::Format("meta.json counts disagree with index files".into()));
        }
        RetrievalIndex::from_parts(chunks, postings, doc_lengths, Bm25Params { k1: meta.k1, b: meta.b }, meta.version_tag)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DocragError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| DocragError::Format("postings.bin is truncated".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DocragError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DocragError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

type Decoded = (Vec<u32>, BTreeMap<String, Vec<Posting>>);

fn decode_postings(buf: &[u8]) -> Result<Decoded, DocragError> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(DocragError::Format("postings.bin has a bad magic number".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(DocragError::Format(format!("postings.bin format version {version}")));
    }
    let chunk_count = r.u32()? as usize;
    let term_count = r.u32()? as usize;
    let doc_lengths = (0..chunk_count).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let mut table = Vec::with_capacity(term_count);
    for _ in 0..term_count {
        let len = r.u32()? as usize;
        let term = std::str::from_utf8(r.take(len)?)
            .map_err(|_| DocragError::Format("term is not UTF-8".into()))?
            .to_owned();
        let count = r.u32()? as usize;
        let offset = r.u64()? as usize;
        table.push((term, count, offset));
    }
    let runs = &buf[r.at..];
    let mut postings = BTreeMap::new();
    for (term, count, offset) in table {
        let mut run = Reader { buf: runs, at: offset };
        let ps = (0..count)
            .map(|_| Ok(Posting { doc: run.u32()?, tf: run.u32()? }))
            .collect::<Result<Vec<_>, DocragError>>()?;
        postings.insert(term, ps);
    }
    Ok((doc_lengths, postings))
}
