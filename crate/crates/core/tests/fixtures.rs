//! Keeps the bundled synthetic corpus in sync with the generator.
//!
//! Regenerate after changing the generator:
//!   cargo test -p pcr-core --test fixtures -- --ignored write_synthetic_fixture

use std::path::PathBuf;

use pcr_core::synthetic::{generate, SyntheticSpec};
use pcr_core::{load_corpus, save_corpus};

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic-corpus.jsonl")
}

#[test]
#[ignore = "writes the bundled fixture; run explicitly after generator changes"]
fn write_synthetic_fixture() {
    let corpus = generate(&SyntheticSpec::default()).unwrap();
    let path = fixture_path();
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    save_corpus(&corpus, &path).unwrap();
    println!("wrote {} ({} documents)", path.display(), corpus.len());
}

#[test]
fn bundled_fixture_is_current() {
    let expected = generate(&SyntheticSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("corpus.jsonl");
    save_corpus(&expected, &fresh).unwrap();

    let path = fixture_path();
    let bundled = std::fs::read(&path).unwrap_or_default();
    assert_eq!(
        bundled,
        std::fs::read(&fresh).unwrap(),
        "fixtures/synthetic-corpus.jsonl is stale; regenerate with \
         `cargo test -p pcr-core --test fixtures -- --ignored write_synthetic_fixture`"
    );
    // And it must round-trip through the public loader.
    let reloaded = load_corpus(&path).unwrap();
    assert_eq!(reloaded.len(), expected.len());
}
