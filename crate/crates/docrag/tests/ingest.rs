use std::path::{Path, PathBuf};

use meshwright_bridge::{ErrorKind, ExecutionError};
use meshwright_docrag::extract::extract_file;
use meshwright_docrag::{
    ingest, reconstruct, DocChunk, DocragError, IngestOptions, RetrievalIndex, Retriever, UNVERSIONED,
};
use proptest::prelude::*;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/specular")
}

fn write(dir: &Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).unwrap();
}

#[test]
fn two_h2_sections_become_two_chunks() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ops.html", "<h2>Add Cube</h2><p>Adds a cube.</p><h2>Add Sphere</h2><p>Adds a sphere.</p>");
    let report = ingest(dir.path(), &IngestOptions::default()).unwrap();
    let titles: Vec<&str> = report.chunks.iter().map(|c| c.title.as_str()).collect();
    assert_eq!(titles, ["Add Cube", "Add Sphere"]);
    assert_eq!(report.chunks[0].source_file, "ops.html");
    assert_eq!(report.version_tag, UNVERSIONED);
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(ingest(dir.path(), &IngestOptions::default()), Err(DocragError::EmptyCorpus)));
    write(dir.path(), "image.png", "not docs");
    assert!(matches!(ingest(dir.path(), &IngestOptions::default()), Err(DocragError::EmptyCorpus)));
}

#[test]
fn oversized_section_wraps_into_three_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let body = "a".repeat(5000);
    write(dir.path(), "big.txt", &body);
    let chunks = ingest(dir.path(), &IngestOptions::default()).unwrap().chunks;
    assert_eq!(chunks.len(), 3);
    for pair in chunks.windows(2) {
        let prev_end = pair[0].offset + pair[0].body.chars().count();
        assert_eq!(pair[1].offset, prev_end - 200);
        assert_eq!(pair[1].overlap, 200);
    }
    assert!(chunks.iter().all(|c| c.body.chars().count() <= 2000));
    assert_eq!(reconstruct(&chunks), body);
}

#[test]
fn fixture_ingest_is_deterministic_and_reconstructs() {
    let opts = IngestOptions::default();
    let a = ingest(&fixture(), &opts).unwrap();
    let b = ingest(&fixture(), &opts).unwrap();
    assert_eq!(a.chunks, b.chunks);
    assert_eq!(a.version_tag, "4.4");
    assert_eq!(a.files, 4);
    let ids: Vec<u32> = a.chunks.iter().map(|c| c.chunk_id).collect();
    assert_eq!(ids, (0..a.chunks.len() as u32).collect::<Vec<_>>());

    for file in ["principled_bsdf.html", "python_errors.html", "node_tree.html", "mesh_ops.txt"] {
        let path = fixture().join(file);
        let text = extract_file(&path, &std::fs::read_to_string(&path).unwrap()).unwrap().text();
        let mine: Vec<&DocChunk> = a.chunks.iter().filter(|c| c.source_file == file).collect();
        assert_eq!(reconstruct(mine), text, "{file}");
    }
    let pre = a.chunks.iter().find(|c| c.title == "Specular").unwrap();
    assert!(pre.body.contains("bsdf.inputs[\"Specular IOR Level\"].default_value = 0.5\n"));
}

#[test]
fn invalid_utf8_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), b"caf\xe9 mesh").unwrap();
    let report = ingest(dir.path(), &IngestOptions::default()).unwrap();
    assert_eq!(report.warnings.len(), 1);
    assert_eq!(report.chunks.len(), 1);
}

fn specular_error() -> ExecutionError {
    ExecutionError::script(
        "KeyError: 'bpy_prop_collection[key]: key \"Specular\" not found'",
        "Traceback (most recent call last):\n  File \"<script>\", line 14, in <module>\n    bsdf.inputs[\"Specular\"].default_value = 0.5\nKeyError: 'bpy_prop_collection[key]: key \"Specular\" not found'\n",
    )
}

#[test]
fn specular_error_finds_the_rename() {
    let idx = RetrievalIndex::build(ingest(&fixture(), &IngestOptions::default()).unwrap().chunks).unwrap();
    let hits = idx.error_query(&specular_error(), 3).unwrap();
    let top = idx.chunk(hits[0].chunk_id).unwrap();
    assert_eq!(top.title, "Specular");
    assert!(top.body.contains("renamed to Specular IOR Level"));

    let timeout = ExecutionError::new(ErrorKind::Timeout, "no response within 100 ms");
    assert!(matches!(idx.error_query(&timeout, 3), Err(DocragError::Precondition(_))));
}

#[test]
fn quoted_identifier_boost_decides_ranking() {
    let chunk = |id: u32, body: &str| DocChunk {
        chunk_id: id,
        source_file: "x.txt".into(),
        title: String::new(),
        body: body.into(),
        version_tag: "t".into(),
        offset: 0,
        overlap: 0,
    };
    let idx = RetrievalIndex::build(vec![chunk(0, "the specular input"), chunk(1, "error key lookup: key")]).unwrap();
    let err = ExecutionError::script("key \"Specular\" not found", "KeyError: key \"Specular\" not found");
    // tail repeats the message: quoted tokens appear 2 + 2×2 = 6 times, "key" twice
    let ln2 = 2f64.ln();
    let avg = 3.5;
    let w = |tf: f64, dl: f64| ln2 * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dl / avg));
    let hits = idx.error_query(&err, 2).unwrap();
    assert_eq!(hits[0].chunk_id, 0);
    assert!((hits[0].score - 6.0 * w(1.0, 3.0)).abs() < 1e-12);
    assert!((hits[1].score - 2.0 * w(2.0, 4.0)).abs() < 1e-12);

    // without the boost the unquoted repetition would win
    let plain = idx.query("key Specular not found", 2).unwrap();
    assert_eq!(plain[0].chunk_id, 1);
}

#[test]
fn index_round_trips_through_disk() {
    let idx = RetrievalIndex::build(ingest(&fixture(), &IngestOptions::default()).unwrap().chunks).unwrap();
    let dir = tempfile::tempdir().unwrap();
    idx.save(dir.path()).unwrap();
    let back = RetrievalIndex::load(dir.path()).unwrap();
    assert_eq!(back, idx);
    assert_eq!(back.meta(), idx.meta());
    assert_eq!(back.query("bmesh.new", 3).unwrap(), idx.query("bmesh.new", 3).unwrap());
    assert_eq!(back.version_tag(), "4.4");

    let bin = dir.path().join("postings.bin");
    let bytes = std::fs::read(&bin).unwrap();
    assert_eq!(&bytes[..4], b"MWPI");
    std::fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(RetrievalIndex::load(dir.path()), Err(DocragError::Format(_))));
}

#[test]
fn rebuild_gives_identical_statistics() {
    let chunks = ingest(&fixture(), &IngestOptions::default()).unwrap().chunks;
    let a = RetrievalIndex::build(chunks.clone()).unwrap();
    let b = RetrievalIndex::build(chunks).unwrap();
    assert_eq!(a.meta(), b.meta());
    assert_eq!(a.postings("bmesh.new"), b.postings("bmesh.new"));
    assert!(!a.postings("bmesh").is_empty() && !a.postings("bmesh.new").is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn chunks_reconstruct_extracted_text(
        paras in prop::collection::vec(("[#]{0,2}", "[a-z]{1,12}( [a-z]{1,12}){0,60}"), 1..30),
        max in 120usize..600,
    ) {
        let md: Vec<String> = paras.iter().map(|(h, p)| if h.is_empty() { p.clone() } else { format!("{h} {p}") }).collect();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("doc.md"), md.join("\n\n")).unwrap();
        let opts = IngestOptions { chunking: meshwright_docrag::ChunkOptions { max_chunk_chars: max, overlap_chars: max / 10 }, ..Default::default() };
        let chunks = ingest(dir.path(), &opts).unwrap().chunks;
        let text = extract_file(Path::new("doc.md"), &md.join("\n\n")).unwrap().text();
        prop_assert_eq!(reconstruct(&chunks), text);
        for c in &chunks {
            prop_assert!(!c.body.is_empty());
            prop_assert!(c.body.chars().count() <= max);
        }
    }
}
