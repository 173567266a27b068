/// Lowercased alphanumeric runs, plus every dotted API path (`bpy.ops.mesh`)
/// as an additional whole token.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens: Vec<String> =
        lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned).collect();
    tokens.extend(dotted_paths(&lower));
    tokens
}

/// Maximal `ident(.ident)+` runs, where identifiers are alphanumeric or `_`.
fn dotted_paths(text: &str) -> Vec<String> {
    let is_ident = |c: char| c.is_alphanumeric() || c == '_';
    let mut out = Vec::new();
    for run in text.split(|c: char| !(is_ident(c) || c == '.')) {
        for candidate in run.split("..") {
            let path = candidate.trim_matches('.');
            if path.contains('.') && path.split('.').all(|seg| !seg.is_empty() && seg.chars().any(char::is_alphanumeric)) {
                out.push(path.to_owned());
            }
        }
    }
    out
}
