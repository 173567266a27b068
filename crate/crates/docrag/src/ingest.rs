use std::path::Path;

use tracing::warn;
use walkdir::WalkDir;

use crate::chunk::{chunk_spans, ChunkOptions, DocChunk};
use crate::error::DocragError;
use crate::extract::extract_file;

/// Name of the optional file at the docs root holding the version tag.
pub const VERSION_FILE: &str = "VERSION";
pub const UNVERSIONED: &str = "unversioned";

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub chunking: ChunkOptions,
    /// Overrides the `VERSION` file.
    pub version_tag: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub chunks: Vec<DocChunk>,
    pub files: usize,
    pub warnings: Vec<String>,
    pub version_tag: String,
}

/// Walks `docs_dir` in sorted order and chunks every HTML, Markdown, reST and
/// text file. Unreadable files are reported and skipped.
pub fn ingest(docs_dir: &Path, opts: &IngestOptions) -> Result<IngestReport, DocragError> {
    if !docs_dir.is_dir() {
        return Err(DocragError::Precondition(format!("{} is not a directory", docs_dir.display())));
    }
    let version_tag = match &opts.version_tag {
        Some(v) => v.clone(),
        None => std::fs::read_to_string(docs_dir.join(VERSION_FILE))
            .ok()
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| UNVERSIONED.to_owned()),
    };
    let mut report = IngestReport { version_tag: version_tag.clone(), ..Default::default() };

    for entry in WalkDir::new(docs_dir).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let msg = format!("skipping unreadable entry: {e}");
                warn!("{msg}");
                report.warnings.push(msg);
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let rel = path.strip_prefix(docs_dir).unwrap_or(path);
        let rel_str = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                let msg = format!("skipping {rel_str}: {e}");
                warn!("{msg}");
                report.warnings.push(msg);
                continue;
            }
        };
        let content = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                report.warnings.push(format!("{rel_str}: invalid UTF-8, decoded lossily"));
                String::from_utf8_lossy(e.as_bytes()).into_owned()
            }
        };
        let Some(doc) = extract_file(path, &content) else {
            continue;
        };
        report.files += 1;
        let text: Vec<char> = doc.text().chars().collect();
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for span in chunk_spans(&doc, &stem, opts.chunking) {
            report.chunks.push(DocChunk {
                chunk_id: report.chunks.len() as u32,
                source_file: rel_str.clone(),
                title: span.title,
                body: text[span.start..span.end].iter().collect(),
                version_tag: version_tag.clone(),
                offset: span.start,
                overlap: span.overlap,
            });
        }
    }
    if report.chunks.is_empty() {
        return Err(DocragError::EmptyCorpus);
    }
    Ok(report)
}
