//! Canonical call identifiers from Blender script source.
//!
//! A chain `root(.attr | [index] | (args))*` contributes one identifier per
//! call site and one for the whole chain when it is the target of an
//! assignment. Argument lists are dropped, index expressions become `[...]`,
//! and roots that are not imported modules become `*`, so
//! `bsdf.inputs['Base Color'].default_value = c` yields
//! `*.inputs[...].default_value`. A call result continues as a `*` root.

use std::collections::{BTreeMap, BTreeSet};

use crate::lex::{lex, Tok};

/// Module roots recognized even when the script never imports them (snippets).
const WELL_KNOWN_MODULES: [&str; 7] = ["bpy", "bmesh", "mathutils", "bpy_extras", "gpu", "math", "random"];

const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractedCalls {
    pub calls: BTreeSet<String>,
    /// Fragments the lexer could not make sense of.
    pub skipped_fragments: usize,
}

pub fn extract_calls(source: &str) -> ExtractedCalls {
    let lexed = lex(source);
    let mut scan = Scanner { toks: &lexed.toks, aliases: BTreeMap::new(), calls: BTreeSet::new() };
    scan.collect_imports();
    scan.scan(0, lexed.toks.len());
    ExtractedCalls { calls: scan.calls, skipped_fragments: lexed.skipped }
}

struct Scanner<'a> {
    toks: &'a [Tok],
    /// Local name → fully qualified module path it was imported as.
    aliases: BTreeMap<String, String>,
    calls: BTreeSet<String>,
}

impl<'a> Scanner<'a> {
    fn ident(&self, i: usize) -> Option<&'a str> {
        match self.toks.get(i) {
            Some(Tok::Ident(s)) => Some(s.as_str()),
            _ => None,
        }
    }

    fn collect_imports(&mut self) {
        let mut i = 0;
        while i < self.toks.len() {
            let line_start = i == 0 || self.toks[i - 1] == Tok::Newline;
            match self.ident(i) {
                Some("import") if line_start => i = self.import_names(i + 1, None),
                Some("from") if line_start => {
                    let (module, next) = self.dotted(i + 1);
                    if self.ident(next) == Some("import") && !module.is_empty() {
                        i = self.import_names(next + 1, Some(module));
                    } else {
                        i = next.max(i + 1);
                    }
                }
                _ => i += 1,
            }
        }
    }

    /// Reads `a.b.c` starting at `i`; returns the path and the index after it.
    fn dotted(&self, mut i: usize) -> (String, usize) {
        let mut path = String::new();
        while let Some(name) = self.ident(i) {
            path.push_str(name);
            if self.toks.get(i + 1) == Some(&Tok::Dot) {
                path.push('.');
                i += 2;
            } else {
                return (path, i + 1);
            }
        }
        (path, i)
    }

    fn import_names(&mut self, mut i: usize, from: Option<String>) -> usize {
        while i < self.toks.len() && self.toks[i] != Tok::Newline {
            match &self.toks[i] {
                Tok::Ident(name) if name != "as" => {
                    let (path, next) = self.dotted(i);
                    let (local, next) = if self.ident(next) == Some("as") {
                        (self.ident(next + 1).unwrap_or_default().to_owned(), next + 2)
                    } else {
                        let head = path.split('.').next().unwrap_or_default().to_owned();
                        (if from.is_some() { path.clone() } else { head }, next)
                    };
                    let target = match &from {
                        Some(module) => format!("{module}.{path}"),
                        None if local == path.split('.').next().unwrap_or_default() => local.clone(),
                        None => path,
                    };
                    if !local.is_empty() {
                        self.aliases.insert(local, target);
                    }
                    i = next;
                }
                _ => i += 1,
            }
        }
        i
    }

    fn root_name(&self, name: &str) -> Option<String> {
        if let Some(target) = self.aliases.get(name) {
            return Some(target.clone());
        }
        WELL_KNOWN_MODULES.contains(&name).then(|| name.to_owned())
    }

    fn matching_close(&self, open: usize) -> usize {
        let mut depth = 0usize;
        for (j, t) in self.toks.iter().enumerate().skip(open) {
            match t {
                Tok::Open(_) => depth += 1,
                Tok::Close(_) => {
                    depth -= 1;
                    if depth == 0 {
                        return j;
                    }
                }
                _ => {}
            }
        }
        self.toks.len()
    }

    fn scan(&mut self, start: usize, end: usize) {
        let mut i = start;
        while i < end {
            let line_start = i == 0 || self.toks[i - 1] == Tok::Newline;
            match &self.toks[i] {
                Tok::Ident(w) if line_start && (w == "import" || w == "from") => {
                    while i < end && self.toks[i] != Tok::Newline {
                        i += 1;
                    }
                }
                Tok::Ident(w) if KEYWORDS.contains(&w.as_str()) => i += 1,
                Tok::Ident(_) if line_start && self.toks.get(i + 1) == Some(&Tok::Assign) => {
                    i = self.binding(i, end);
                }
                Tok::Ident(_) if i == 0 || self.toks[i - 1] != Tok::Dot => {
                    i = self.chain(i, end).end;
                }
                _ => i += 1,
            }
        }
    }

    /// `name = rhs` at statement level. A name bound to a plain attribute
    /// path keeps that attribute as its root (`nodes = mat.node_tree.nodes`
    /// makes `nodes.new(..)` read `*.nodes.new`); any other binding turns it
    /// into an anonymous local.
    fn binding(&mut self, i: usize, end: usize) -> usize {
        let name = self.ident(i).expect("binding starts at an identifier").to_owned();
        let rhs = i + 2;
        if !matches!(self.ident(rhs), Some(w) if !KEYWORDS.contains(&w)) {
            self.aliases.remove(&name);
            return rhs;
        }
        let walked = self.chain(rhs, end);
        let whole_statement = walked.end >= end || self.toks.get(walked.end) == Some(&Tok::Newline);
        match walked.last_attr {
            _ if !whole_statement || walked.called => {
                self.aliases.remove(&name);
            }
            Some(attr) => {
                self.aliases.insert(name, format!("*.{attr}"));
            }
            None if walked.qualified => {
                self.aliases.insert(name, walked.canon);
            }
            None => {
                self.aliases.remove(&name);
            }
        }
        walked.end
    }

    /// Walks one chain starting at the identifier `i`, recording call sites
    /// and assignment targets.
    fn chain(&mut self, i: usize, end: usize) -> Walked {
        let root = self.ident(i).expect("chain starts at an identifier");
        let mut canon = self.root_name(root).unwrap_or_else(|| "*".to_owned());
        let mut qualified = !canon.starts_with('*');
        let mut segments = 0usize;
        let mut last_attr = None;
        let mut called = false;
        let mut j = i + 1;
        loop {
            match self.toks.get(j) {
                Some(Tok::Dot) if j + 1 < end => match self.ident(j + 1) {
                    Some(attr) => {
                        canon.push('.');
                        canon.push_str(attr);
                        segments += 1;
                        last_attr = Some(attr.to_owned());
                        j += 2;
                    }
                    None => break,
                },
                Some(Tok::Open('[')) if j < end => {
                    let close = self.matching_close(j);
                    self.scan(j + 1, close.min(end));
                    canon.push_str("[...]");
                    segments += 1;
                    last_attr = None;
                    j = close + 1;
                }
                Some(Tok::Open('(')) if j < end => {
                    let close = self.matching_close(j);
                    if segments > 0 || qualified || canon.len() > 1 {
                        self.calls.insert(canon.clone());
                    }
                    self.scan(j + 1, close.min(end));
                    canon = "*".to_owned();
                    qualified = false;
                    segments = 0;
                    last_attr = None;
                    called = true;
                    j = close + 1;
                }
                _ => break,
            }
        }
        if (segments > 0 || canon.len() > 1) && matches!(self.toks.get(j), Some(Tok::Assign | Tok::AugAssign)) {
            self.calls.insert(canon.clone());
        }
        Walked { end: j.min(end).max(i + 1), canon, qualified, last_attr, called }
    }
}

struct Walked {
    end: usize,
    canon: String,
    qualified: bool,
    last_attr: Option<String>,
    called: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calls(src: &str) -> Vec<String> {
        extract_calls(src).calls.into_iter().collect()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(calls("bpy.ops.mesh.primitive_uv_sphere_add(radius=1)"), vec!["bpy.ops.mesh.primitive_uv_sphere_add"]);
        assert_eq!(calls("bm = bmesh.new()"), vec!["bmesh.new"]);
        assert!(calls("# bmesh.new() in a comment").is_empty());
        assert_eq!(
            calls("bsdf.inputs['Base Color'].default_value = (1, 0, 0, 1)"),
            vec!["*.inputs[...].default_value"]
        );
    }

    #[test]
    fn reads_are_not_calls() {
        assert!(calls("x = bpy.context.object\ny = obj.data.vertices[0].co").is_empty());
        assert!(calls("if obj.scale.x > 1:\n    pass").is_empty());
    }

    #[test]
    fn chained_call_results_become_anonymous() {
        assert_eq!(
            calls("bpy.data.materials.new(name='m').node_tree.nodes.new('ShaderNodeBsdfPrincipled')"),
            vec!["*.node_tree.nodes.new", "bpy.data.materials.new"]
        );
    }

    #[test]
    fn arguments_and_indices_are_scanned() {
        assert_eq!(
            calls("links.new(bsdf.outputs['BSDF'], out.inputs[bpy.context.scene.frame_current()])"),
            vec!["*.new", "bpy.context.scene.frame_current"]
        );
    }

    #[test]
    fn augmented_assignment_and_imports() {
        let src = "import bmesh as bm_mod\nfrom mathutils import Vector, Matrix as M\nv.co.z += 0.5\nb = bm_mod.new()\nd = Vector((0, 0, 1))\nM.Identity(4)\nprint(b)\n";
        assert_eq!(calls(src), vec!["*.co.z", "bmesh.new", "mathutils.Matrix.Identity", "mathutils.Vector"]);
    }

    #[test]
    fn comparisons_are_not_assignments() {
        assert!(calls("ok = obj.scale == other").is_empty());
    }

    #[test]
    fn attribute_bindings_keep_their_attribute() {
        let src = "nodes = mat.node_tree.nodes\nlinks = mat.node_tree.links\nbsdf = nodes.new('ShaderNodeBsdfPrincipled')\nlinks.new(a, b)\nbsdf.inputs[0].default_value = 1\nverts = mesh.vertices\nverts[0].co = (0, 0, 0)\nnodes = make()\nnodes.new('x')\n";
        assert_eq!(
            calls(src),
            vec!["*.inputs[...].default_value", "*.links.new", "*.new", "*.nodes.new", "*.vertices[...].co"]
        );
    }

    #[test]
    fn dotted_import_binds_head() {
        assert_eq!(calls("import bpy.ops\nbpy.ops.object.mode_set(mode='EDIT')"), vec!["bpy.ops.object.mode_set"]);
    }
}
