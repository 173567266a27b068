//! Heading-first chunking with paragraph-aligned hard wrapping.

use serde::{Deserialize, Serialize};

use crate::extract::{BlockKind, Extracted, BLOCK_SEPARATOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkOptions {
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        Self { max_chunk_chars: 2000, overlap_chars: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocChunk {
    pub chunk_id: u32,
    /// Path relative to the docs directory, `/`-separated.
    pub source_file: String,
    /// Nearest heading, or the document title.
    pub title: String,
    pub body: String,
    pub version_tag: String,
    /// Char offset of `body` within the file's extracted text.
    pub offset: usize,
    /// Leading chars of `body` repeated from the previous chunk of this file.
    pub overlap: usize,
}

/// A chunk before ids and provenance are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub title: String,
    pub start: usize,
    pub end: usize,
    pub overlap: usize,
}

/// Splits extracted text into sections at headings, then wraps sections longer
/// than `max_chunk_chars`. Spans cover the text exactly once apart from the
/// declared overlaps. Offsets are in chars.
pub fn chunk_spans(doc: &Extracted, fallback_title: &str, opts: ChunkOptions) -> Vec<Span> {
    assert!(opts.overlap_chars < opts.max_chunk_chars, "overlap must be smaller than the chunk size");
    let text: Vec<char> = doc.text().chars().collect();
    let sep = BLOCK_SEPARATOR.chars().count();

    // section starts: offset of every heading block
    let doc_title = doc.title.clone().unwrap_or_else(|| fallback_title.to_owned());
    let mut sections: Vec<(usize, String)> = Vec::new();
    let mut at = 0;
    for (i, b) in doc.blocks.iter().enumerate() {
        if i > 0 {
            at += sep;
        }
        if let BlockKind::Heading(_) = b.kind {
            sections.push((at, b.text.clone()));
        } else if sections.is_empty() {
            sections.push((at, doc_title.clone()));
        }
        at += b.render().chars().count();
    }
    debug_assert_eq!(at, text.len());

    let mut spans = Vec::new();
    for (k, (start, title)) in sections.iter().enumerate() {
        let end = sections.get(k + 1).map(|s| s.0).unwrap_or(text.len());
        wrap(&text, *start, end, title, opts, &mut spans);
    }
    spans
}

fn wrap(text: &[char], start: usize, end: usize, title: &str, opts: ChunkOptions, out: &mut Vec<Span>) {
    let mut pos = start;
    let mut overlap = 0;
    loop {
        if end - pos <= opts.max_chunk_chars {
            out.push(Span { title: title.to_owned(), start: pos, end, overlap });
            return;
        }
        let limit = pos + opts.max_chunk_chars;
        let lo = pos + opts.overlap_chars + 1;
        let paragraph = (lo..=limit).rev().find(|&p| p >= 2 && text[p - 2] == '\n' && text[p - 1] == '\n');
        let cut = paragraph
            .or_else(|| (lo..=limit).rev().find(|&p| text[p - 1].is_whitespace()))
            .unwrap_or(limit);
        out.push(Span { title: title.to_owned(), start: pos, end: cut, overlap });
        pos = cut - opts.overlap_chars;
        overlap = opts.overlap_chars;
    }
}

/// Rebuilds a file's extracted text from its chunks, dropping overlaps.
pub fn reconstruct<'a>(chunks: impl IntoIterator<Item = &'a DocChunk>) -> String {
    let mut out = String::new();
    for c in chunks {
        out.extend(c.body.chars().skip(c.overlap));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{extract_markdown, extract_plain};

    #[test]
    fn sections_split_at_headings() {
        let doc = extract_markdown("intro\n\n# A\n\nalpha\n\n## B\n\nbeta");
        let spans = chunk_spans(&doc, "file", ChunkOptions::default());
        let titles: Vec<&str> = spans.iter().map(|s| s.title.as_str()).collect();
        assert_eq!(titles, ["A", "A", "B"]);
        // the leading paragraph falls back to the document title (first heading)
        let text: Vec<char> = doc.text().chars().collect();
        let body = |s: &Span| text[s.start..s.end].iter().collect::<String>();
        assert_eq!(body(&spans[0]), "intro\n\n");
        assert_eq!(body(&spans[1]), "# A\n\nalpha\n\n");
        assert_eq!(body(&spans[2]), "## B\n\nbeta");
    }

    #[test]
    fn long_paragraph_is_hard_wrapped() {
        let doc = extract_plain(&"x".repeat(5000));
        let spans = chunk_spans(&doc, "f", ChunkOptions::default());
        let bounds: Vec<(usize, usize, usize)> = spans.iter().map(|s| (s.start, s.end, s.overlap)).collect();
        assert_eq!(bounds, vec![(0, 2000, 0), (1800, 3800, 200), (3600, 5000, 200)]);
    }

    #[test]
    fn wraps_prefer_paragraph_boundaries() {
        let para = "word ".repeat(99) + "end.";
        let doc = extract_plain(&vec![para.clone(); 8].join("\n\n"));
        let spans = chunk_spans(&doc, "f", ChunkOptions::default());
        let text: Vec<char> = doc.text().chars().collect();
        for s in &spans[..spans.len() - 1] {
            assert!(s.end - s.start <= 2000);
            assert_eq!(&text[s.end - 2..s.end], &['\n', '\n']);
        }
    }
}
