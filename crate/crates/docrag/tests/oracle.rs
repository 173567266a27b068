//! Index scores against a brute-force BM25 written from the textbook formula.

use std::collections::BTreeMap;

use meshwright_docrag::{tokenize, DocChunk, RetrievalIndex};
use proptest::prelude::*;

const K1: f64 = 1.2;
const B: f64 = 0.75;

fn brute_force(docs: &[Vec<String>], query: &[String]) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|d| {
            let mut total = 0.0;
            for q in query {
                let df = docs.iter().filter(|o| o.contains(q)).count() as f64;
                let tf = d.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                total += idf * (tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * d.len() as f64 / avg));
            }
            total
        })
        .collect()
}

fn chunk(id: u32, body: String) -> DocChunk {
    DocChunk {
        chunk_id: id,
        source_file: format!("doc{id}.txt"),
        title: String::new(),
        body,
        version_tag: "test".into(),
        offset: 0,
        overlap: 0,
    }
}

const VOCAB: &[&str] = &[
    "shader", "nodes", "mesh", "bmesh", "bpy.ops.mesh", "vertex", "modifier", "material", "uv", "sphere", "cube",
    "bsdf", "specular", "geometry", "object", "scale", "render", "camera", "light", "bevel",
];

fn corpus() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    let word = prop::sample::select(VOCAB);
    let doc = prop::collection::vec(word.clone(), 1..40).prop_map(|w| w.join(" "));
    (prop::collection::vec(doc, 1..=50), prop::collection::vec(word, 1..=30).prop_map(|w| w.iter().map(|s| s.to_string()).collect()))
}

fn check(bodies: Vec<String>, query_words: Vec<String>) -> Result<(), TestCaseError> {
    let chunks: Vec<DocChunk> = bodies.iter().enumerate().map(|(i, b)| chunk(i as u32, b.clone())).collect();
    let idx = RetrievalIndex::build(chunks).unwrap();
    let docs: Vec<Vec<String>> = bodies.iter().map(|b| tokenize(b)).collect();
    let query_text = query_words.join(" ");
    let expected = brute_force(&docs, &tokenize(&query_text));
    let got: BTreeMap<u32, f64> =
        idx.query(&query_text, bodies.len()).unwrap().into_iter().map(|h| (h.chunk_id, h.score)).collect();
    for (i, want) in expected.iter().enumerate() {
        match got.get(&(i as u32)) {
            Some(s) => prop_assert!((s - want).abs() <= 1e-9, "chunk {i}: {s} vs {want}"),
            None => prop_assert_eq!(*want, 0.0, "chunk {} missing", i),
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]
    #[test]
    fn scores_match_brute_force((bodies, query) in corpus()) {
        check(bodies, query)?;
    }
}

#[test]
fn five_chunk_shader_nodes() {
    let bodies: Vec<String> = [
        "shader nodes build materials from shader nodes",
        "geometry nodes modify mesh data",
        "the principled bsdf shader",
        "camera and light setup",
        "nodes nodes nodes",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    check(bodies.clone(), vec!["shader".into(), "nodes".into()]).unwrap();

    // by hand: N=5, avgdl=23/5=4.6; "shader" df=2, "nodes" df=3
    let idx = RetrievalIndex::build(bodies.into_iter().enumerate().map(|(i, b)| chunk(i as u32, b)).collect()).unwrap();
    let hits = idx.query("shader nodes", 5).unwrap();
    let idf_s = (1.0f64 + (5.0 - 2.0 + 0.5) / 2.5).ln();
    let idf_n = (1.0f64 + (5.0 - 3.0 + 0.5) / 3.5).ln();
    let norm = |dl: f64| K1 * (1.0 - B + B * dl / 4.6);
    let doc0 = idf_s * 2.0 * 2.2 / (2.0 + norm(7.0)) + idf_n * 2.0 * 2.2 / (2.0 + norm(7.0));
    let h0 = hits.iter().find(|h| h.chunk_id == 0).unwrap();
    assert!((h0.score - doc0).abs() < 1e-12);
    assert_eq!(hits[0].chunk_id, 0);
    assert_eq!(hits.len(), 4);
}
