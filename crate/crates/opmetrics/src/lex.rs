//! Just enough of a Python tokenizer to find attribute chains.
//!
//! Strings (including f-strings and triple-quoted blocks) and comments are
//! consumed without emitting their contents. Characters that cannot start any
//! Python token are skipped and counted.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Dot,
    Open(char),
    Close(char),
    Assign,
    AugAssign,
    Comma,
    /// Logical line break (never emitted inside brackets).
    Newline,
    Literal,
    Other,
}

#[derive(Debug, Default)]
pub(crate) struct Lexed {
    pub toks: Vec<Tok>,
    pub skipped: usize,
}

const AUG_OPS: [&str; 13] = ["+=", "-=", "*=", "/=", "//=", "%=", "**=", "@=", "&=", "|=", "^=", ">>=", "<<="];
const COMPARE_OPS: [&str; 5] = ["==", "!=", "<=", ">=", ":="];

pub(crate) fn lex(source: &str) -> Lexed {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Lexed::default();
    let mut depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '\n' => {
                if depth == 0 && out.toks.last().is_some_and(|t| *t != Tok::Newline) {
                    out.toks.push(Tok::Newline);
                }
                i += 1;
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => i += 2,
            c if c.is_whitespace() => i += 1,
            '\'' | '"' => {
                i = skip_string(&chars, i, &mut out.skipped);
                out.toks.push(Tok::Literal);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if i < chars.len() && matches!(chars[i], '\'' | '"') && is_string_prefix(&word) {
                    i = skip_string(&chars, i, &mut out.skipped);
                    out.toks.push(Tok::Literal);
                } else {
                    out.toks.push(Tok::Ident(word));
                }
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                out.toks.push(Tok::Literal);
            }
            '.' => {
                out.toks.push(Tok::Dot);
                i += 1;
            }
            '(' | '[' | '{' => {
                depth += 1;
                out.toks.push(Tok::Open(c));
                i += 1;
            }
            ')' | ']' | '}' => {
                depth = depth.saturating_sub(1);
                out.toks.push(Tok::Close(c));
                i += 1;
            }
            ',' => {
                out.toks.push(Tok::Comma);
                i += 1;
            }
            ';' => {
                if depth == 0 {
                    out.toks.push(Tok::Newline);
                }
                i += 1;
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
                if let Some(op) = AUG_OPS.iter().filter(|op| rest.starts_with(*op)).max_by_key(|op| op.len()) {
                    out.toks.push(Tok::AugAssign);
                    i += op.chars().count();
                } else if let Some(op) = COMPARE_OPS.iter().find(|op| rest.starts_with(*op)) {
                    out.toks.push(Tok::Other);
                    i += op.len();
                } else if c == '=' {
                    out.toks.push(Tok::Assign);
                    i += 1;
                } else if "+-*/%@&|^~<>:!".contains(c) {
                    out.toks.push(Tok::Other);
                    i += 1;
                } else {
                    out.skipped += 1;
                    i += 1;
                }
            }
        }
    }
    out
}

fn is_string_prefix(word: &str) -> bool {
    word.len() <= 2 && word.chars().all(|c| "rRbBuUfF".contains(c))
}

/// Returns the index just past the string literal starting at `start`.
/// An unterminated single-line string ends at the newline and counts as a
/// skipped fragment; an unterminated triple-quoted one runs to end of input.
fn skip_string(chars: &[char], start: usize, skipped: &mut usize) -> usize {
    let q = chars[start];
    let triple = chars.get(start + 1) == Some(&q) && chars.get(start + 2) == Some(&q);
    let mut i = start + if triple { 3 } else { 1 };
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            c if c == q => {
                if !triple {
                    return i + 1;
                }
                if chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    return i + 3;
                }
                i += 1;
            }
            '\n' if !triple => {
                *skipped += 1;
                return i;
            }
            _ => i += 1,
        }
    }
    *skipped += 1;
    chars.len()
}
