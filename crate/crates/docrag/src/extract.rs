//! Document text extraction.
//!
//! HTML (as produced by Sphinx for the Blender manual and API reference) is
//! reduced to a list of blocks: headings with their level, prose paragraphs
//! with whitespace collapsed, and preformatted code kept verbatim. Markdown,
//! reStructuredText and plain text go through a lighter paragraph splitter.
//! The extracted text of a file is its rendered blocks joined by a blank line.

use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Heading(u8),
    Text,
    Code,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub text: String,
}

impl Block {
    fn new(kind: BlockKind, text: impl Into<String>) -> Self {
        Self { kind, text: text.into() }
    }

    /// Headings render Markdown-style so the hierarchy survives in plain text.
    pub fn render(&self) -> String {
        match self.kind {
            BlockKind::Heading(level) => format!("{} {}", "#".repeat(level as usize), self.text),
            _ => self.text.clone(),
        }
    }
}

pub const BLOCK_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extracted {
    /// `<title>` or first heading, if any.
    pub title: Option<String>,
    pub blocks: Vec<Block>,
}

impl Extracted {
    pub fn text(&self) -> String {
        let parts: Vec<String> = self.blocks.iter().map(Block::render).collect();
        parts.join(BLOCK_SEPARATOR)
    }
}

/// Picks the extractor from the file extension. Returns `None` for file types
/// that are not documentation.
pub fn extract_file(path: &Path, content: &str) -> Option<Extracted> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "html" | "htm" | "xhtml" => Some(extract_html(content)),
        "md" | "markdown" => Some(extract_markdown(content)),
        "rst" => Some(extract_rst(content)),
        "txt" | "text" => Some(extract_plain(content)),
        _ => None,
    }
}

// ---------------------------------------------------------------- HTML

const SKIPPED: &[&str] = &["script", "style", "noscript", "nav", "footer", "head", "template", "svg"];
const BLOCK_TAGS: &[&str] = &[
    "p", "div", "li", "ul", "ol", "dl", "dt", "dd", "tr", "td", "th", "table", "section", "article", "main",
    "blockquote", "br", "hr", "header", "aside", "figure", "figcaption", "caption", "body", "html",
];

struct HtmlState {
    blocks: Vec<Block>,
    buf: String,
    heading: Option<u8>,
    pre_depth: usize,
    skip: Option<String>,
    title: Option<String>,
    in_title: bool,
}

impl HtmlState {
    fn flush(&mut self) {
        let raw = std::mem::take(&mut self.buf);
        if self.pre_depth > 0 {
            let code = raw.strip_prefix('\n').unwrap_or(&raw).trim_end_matches(['\n', '\r', ' ', '\t']);
            if !code.trim().is_empty() {
                self.blocks.push(Block::new(BlockKind::Code, code));
            }
            return;
        }
        let mut text = collapse(&raw);
        if let Some(level) = self.heading {
            // Sphinx permalink anchors
            text = text.trim_end_matches(['¶', '#', ' ']).to_owned();
            if !text.is_empty() {
                self.blocks.push(Block::new(BlockKind::Heading(level), text));
            }
        } else if !text.is_empty() {
            self.blocks.push(Block::new(BlockKind::Text, text));
        }
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tag_name(tag: &str) -> (bool, String) {
    let (closing, rest) = match tag.strip_prefix('/') {
        Some(r) => (true, r),
        None => (false, tag),
    };
    // `< y` is text, not a tag
    if !rest.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return (closing, String::new());
    }
    let name: String = rest.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
    (closing, name.to_ascii_lowercase())
}

pub fn extract_html(html: &str) -> Extracted {
    let mut st = HtmlState {
        blocks: Vec::new(),
        buf: String::new(),
        heading: None,
        pre_depth: 0,
        skip: None,
        title: None,
        in_title: false,
    };
    let mut title_buf = String::new();
    let mut rest = html;
    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            push_text(&mut st, &mut title_buf, rest);
            break;
        };
        push_text(&mut st, &mut title_buf, &rest[..lt]);
        rest = &rest[lt..];
        if let Some(after) = rest.strip_prefix("<!--") {
            rest = after.find("-->").map(|i| &after[i + 3..]).unwrap_or("");
            continue;
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            rest = rest.find('>').map(|i| &rest[i + 1..]).unwrap_or("");
            continue;
        }
        let Some(gt) = find_tag_end(rest) else {
            // stray '<' in text
            push_text(&mut st, &mut title_buf, "<");
            rest = &rest[1..];
            continue;
        };
        let tag = &rest[1..gt];
        let (closing, name) = tag_name(tag);
        if name.is_empty() {
            push_text(&mut st, &mut title_buf, "<");
            rest = &rest[1..];
            continue;
        }
        rest = &rest[gt + 1..];
        let self_closing = tag.trim_end().ends_with('/');

        if name == "title" {
            st.in_title = !closing;
            if closing && st.title.is_none() {
                let t = collapse(&decode_entities(&title_buf));
                if !t.is_empty() {
                    st.title = Some(t);
                }
            }
            continue;
        }
        if let Some(skipping) = &st.skip {
            if closing && *skipping == name {
                st.skip = None;
            }
            continue;
        }
        if SKIPPED.contains(&name.as_str()) && !closing && !self_closing {
            st.skip = Some(name);
            continue;
        }
        if name == "pre" {
            st.flush();
            if closing {
                st.pre_depth = st.pre_depth.saturating_sub(1);
            } else {
                st.pre_depth += 1;
            }
            continue;
        }
        if st.pre_depth > 0 {
            // markup inside code blocks (highlighting spans) is dropped
            continue;
        }
        if let Some(level) = heading_level(&name) {
            st.flush();
            st.heading = if closing { None } else { Some(level) };
            continue;
        }
        if BLOCK_TAGS.contains(&name.as_str()) && st.heading.is_none() {
            st.flush();
        }
    }
    st.flush();
    let title = st.title.clone().or_else(|| {
        st.blocks.iter().find(|b| matches!(b.kind, BlockKind::Heading(_))).map(|b| b.text.clone())
    });
    Extracted { title, blocks: st.blocks }
}

fn push_text(st: &mut HtmlState, title_buf: &mut String, raw: &str) {
    if raw.is_empty() {
        return;
    }
    if st.in_title {
        title_buf.push_str(raw);
        return;
    }
    if st.skip.is_some() {
        return;
    }
    st.buf.push_str(&decode_entities(raw));
}

/// Index of the `>` closing the tag at the start of `s`, honoring quoted
/// attribute values.
fn find_tag_end(s: &str) -> Option<usize> {
    let mut quote = None;
    for (i, c) in s.char_indices().skip(1) {
        match (quote, c) {
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '>') => return Some(i),
            (None, '<') => return None,
            _ => {}
        }
    }
    None
}

fn heading_level(name: &str) -> Option<u8> {
    match name.as_bytes() {
        [b'h', d @ b'1'..=b'6'] => Some(d - b'0'),
        _ => None,
    }
}

pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let end = rest.char_indices().take(12).find(|(_, c)| *c == ';').map(|(i, _)| i);
        let decoded = end.and_then(|e| entity(&rest[1..e]).map(|c| (c, e)));
        match decoded {
            Some((c, e)) => {
                out.push(c);
                rest = &rest[e + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "para" => '¶',
        "mdash" => '—',
        "ndash" => '–',
        "hellip" => '…',
        "lsquo" => '‘',
        "rsquo" => '’',
        "ldquo" => '“',
        "rdquo" => '”',
        "copy" => '©',
        "times" => '×',
        "rarr" => '→',
        "larr" => '←',
        "deg" => '°',
        _ => return None,
    })
}

// ---------------------------------------------------------------- text formats

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line.trim_end());
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n"));
    }
    out
}

pub fn extract_plain(text: &str) -> Extracted {
    let blocks = paragraphs(text).into_iter().map(|p| Block::new(BlockKind::Text, p)).collect();
    Extracted { title: None, blocks }
}

pub fn extract_markdown(text: &str) -> Extracted {
    let mut blocks = Vec::new();
    let mut para: Vec<&str> = Vec::new();
    let mut fence: Option<Vec<&str>> = None;
    let flush = |para: &mut Vec<&str>, blocks: &mut Vec<Block>| {
        if !para.is_empty() {
            blocks.push(Block::new(BlockKind::Text, para.join("\n")));
            para.clear();
        }
    };
    for line in text.lines() {
        if let Some(code) = fence.as_mut() {
            if line.trim_start().starts_with("```") {
                let body = code.join("\n");
                if !body.trim().is_empty() {
                    blocks.push(Block::new(BlockKind::Code, body));
                }
                fence = None;
            } else {
                code.push(line);
            }
            continue;
        }
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            flush(&mut para, &mut blocks);
            fence = Some(Vec::new());
        } else if let Some(level) = md_heading(trimmed) {
            flush(&mut para, &mut blocks);
            let text = trimmed[level as usize..].trim().trim_end_matches('#').trim();
            if !text.is_empty() {
                blocks.push(Block::new(BlockKind::Heading(level), text));
            }
        } else if trimmed.is_empty() {
            flush(&mut para, &mut blocks);
        } else {
            para.push(line.trim_end());
        }
    }
    if let Some(code) = fence {
        let body = code.join("\n");
        if !body.trim().is_empty() {
            blocks.push(Block::new(BlockKind::Code, body));
        }
    }
    flush(&mut para, &mut blocks);
    let title = blocks.iter().find(|b| matches!(b.kind, BlockKind::Heading(_))).map(|b| b.text.clone());
    Extracted { title, blocks }
}

fn md_heading(line: &str) -> Option<u8> {
    let hashes = line.chars().take_while(|c| *c == '#').count();
    ((1..=6).contains(&hashes) && line[hashes..].starts_with(' ')).then_some(hashes as u8)
}

/// reStructuredText: a two-line paragraph whose second line is an underline
/// of one punctuation character becomes a heading; levels follow the order
/// underline characters are first seen.
pub fn extract_rst(text: &str) -> Extracted {
    let mut seen: Vec<char> = Vec::new();
    let mut blocks = Vec::new();
    for p in paragraphs(text) {
        let lines: Vec<&str> = p.lines().collect();
        let underline = lines.get(1).and_then(|u| {
            let c = u.chars().next()?;
            (lines.len() == 2
                && "=-~^*+#\"'`".contains(c)
                && u.chars().all(|x| x == c)
                && u.chars().count() >= lines[0].trim().chars().count())
            .then_some(c)
        });
        match underline {
            Some(c) => {
                let level = match seen.iter().position(|x| *x == c) {
                    Some(i) => i + 1,
                    None => {
                        seen.push(c);
                        seen.len()
                    }
                };
                blocks.push(Block::new(BlockKind::Heading(level.min(6) as u8), lines[0].trim()));
            }
            None => blocks.push(Block::new(BlockKind::Text, p)),
        }
    }
    let title = blocks.iter().find(|b| matches!(b.kind, BlockKind::Heading(_))).map(|b| b.text.clone());
    Extracted { title, blocks }
}
