//! End-to-end checks of the `pcr` binary: exit codes, output formats, and
//! byte determinism of every written artifact.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CORPUS: &str = r#"{"format":"pcr-corpus","version":1}
{"id":"p1","date":"2000-01-01","facts":"zoning permit dispute boundary quarrel","reasoning":""}
{"id":"p2","date":"2000-02-01","facts":"construction delays everywhere always","reasoning":""}
{"id":"p3","date":"2000-03-01","facts":"fishing licence revoked unfairly","reasoning":""}
{"id":"q1","date":"2010-01-01","facts":"construction delays administrative silence","reasoning":"The zoning permit dispute standard applies here; see [[CITE:p1]]."}
{"id":"q2","date":"2010-02-01","facts":"boat licence paperwork lost","reasoning":"Compare the revoked fishing licence in [[CITE:p3]] and [[CITE:p1]]."}
"#;

const CONFIG: &str = r#"
[corpus]
path = "corpus.jsonl"

[concepts]
budget = 5
stop_on_nonpositive_gain = false
file = "out/concepts.jsonl"

[eval]
k_set = [1, 3]
rows = ["baseline", "oracle"]

[run]
seed = 0
out_dir = "out"
"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.jsonl"), CORPUS).unwrap();
    fs::write(dir.path().join("pcr.toml"), CONFIG).unwrap();
    dir
}

fn pcr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn extract_writes_loadable_deterministic_concepts() {
    let dir = setup();
    let out = pcr(dir.path(), &["extract"]);
    assert!(out.status.success(), "{}", stderr(&out));
    // Reasoning-less documents are skipped with a warning.
    assert!(stderr(&out).contains("p1"));
    assert!(stderr(&out).contains("no reasoning"));
    // Per-document selection sizes on stdout.
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("q1 ")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("q2 ")), "{text}");
    assert!(!text.contains("p1"), "reasoning-less doc must not be extracted");

    let first = fs::read(dir.path().join("out/concepts.jsonl")).unwrap();
    assert!(!first.is_empty());
    let again = pcr(dir.path(), &["extract"]);
    assert!(again.status.success());
    let second = fs::read(dir.path().join("out/concepts.jsonl")).unwrap();
    assert_eq!(first, second, "extraction must be byte-deterministic");
}

#[test]
fn index_is_deterministic_and_search_matches_in_memory() {
    let dir = setup();
    let out = pcr(dir.path(), &["index"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let index_path = dir.path().join("out/index.bin");
    let first = fs::read(&index_path).unwrap();
    assert!(pcr(dir.path(), &["index"]).status.success());
    assert_eq!(first, fs::read(&index_path).unwrap(), "index must rebuild identically");

    let from_file = pcr(dir.path(), &["search", "--query-id", "q2", "--k", "3"]);
    assert!(from_file.status.success());
    fs::remove_file(&index_path).unwrap();
    let in_memory = pcr(dir.path(), &["search", "--query-id", "q2", "--k", "3"]);
    assert!(in_memory.status.success());
    assert_eq!(stdout(&from_file), stdout(&in_memory));

    // Rank, id, score with six decimals; pool has 4 earlier docs, k=3.
    let text = stdout(&from_file);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 3, "{line}");
        assert_eq!(parts[0], (i + 1).to_string());
        let (_, decimals) = parts[2].split_once('.').expect("decimal score");
        assert_eq!(decimals.len(), 6, "{line}");
    }
}

#[test]
fn search_pool_smaller_than_k_prints_fewer_lines() {
    let dir = setup();
    // p2's pool is just p1.
    let out = pcr(dir.path(), &["search", "--query-id", "p2", "--k", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn missing_corpus_path_exits_2() {
    let dir = setup();
    fs::write(dir.path().join("pcr.toml"), "[corpus]\npath = \"absent.jsonl\"\n").unwrap();
    let out = pcr(dir.path(), &["index"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("absent.jsonl"));
}

#[test]
fn unknown_query_id_exits_3() {
    let dir = setup();
    let out = pcr(dir.path(), &["search", "--query-id", "nope"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn conflicting_query_flags_exit_2() {
    let dir = setup();
    let out = pcr(dir.path(), &["search", "--query-id", "q1", "--query-text", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let none = pcr(dir.path(), &["search"]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn corrupt_corpus_exits_3() {
    let dir = setup();
    fs::write(dir.path().join("corpus.jsonl"), "not a corpus\n").unwrap();
    let out = pcr(dir.path(), &["index"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn evaluate_writes_deterministic_reports() {
    let dir = setup();
    let out = pcr(dir.path(), &["evaluate"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("configuration"));
    assert!(table.contains("baseline"));
    assert!(table.contains("+oracle"));

    let json_path = dir.path().join("out/report.json");
    let text_path = dir.path().join("out/report.txt");
    let first = fs::read(&json_path).unwrap();
    assert_eq!(fs::read_to_string(&text_path).unwrap(), table);

    assert!(pcr(dir.path(), &["evaluate"]).status.success());
    assert_eq!(first, fs::read(&json_path).unwrap(), "same seed must replay byte-identically");

    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["label"], "baseline");
    assert_eq!(rows[1]["label"], "+oracle");
    // Two labeled queries, no skips, on this fixture.
    assert_eq!(rows[0]["report"]["query_count"], 2);
}

#[test]
fn evaluate_single_row_flag() {
    let dir = setup();
    let out = pcr(dir.path(), &["evaluate", "--row", "oracle"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["label"], "+oracle");

    let bad = pcr(dir.path(), &["evaluate", "--row", "bogus"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn noise_rows_depend_only_on_seed() {
    let dir = setup();
    assert!(pcr(dir.path(), &["extract"]).status.success());
    let config = CONFIG.replace(
        "rows = [\"baseline\", \"oracle\"]",
        "rows = [\"baseline\", \"concepts\", \"noise\"]",
    );
    fs::write(dir.path().join("pcr.toml"), config).unwrap();

    let report_for = |seed: &str, dir: &Path| -> serde_json::Value {
        let out = pcr(dir, &["evaluate", "--seed", seed]);
        assert!(out.status.success(), "{}", stderr(&out));
        serde_json::from_slice(&fs::read(dir.join("out/report.json")).unwrap()).unwrap()
    };
    let a = report_for("5", dir.path());
    let b = report_for("6", dir.path());
    let c = report_for("5", dir.path());
    assert_eq!(a, c, "same seed replays exactly");
    // Seed-independent rows keep their metrics.
    for row in 0..2 {
        assert_eq!(
            a["rows"][row]["report"]["map"], b["rows"][row]["report"]["map"],
            "row {row} must not depend on the seed"
        );
        assert_eq!(a["rows"][row]["report"]["per_query"], b["rows"][row]["report"]["per_query"]);
    }
}

#[test]
fn dense_free_text_ranks_matching_doc_first() {
    let dir = setup();
    let config = CONFIG.replace("[eval]", "[retriever]\nkind = \"dense\"\n\n[eval]");
    fs::write(dir.path().join("pcr.toml"), config).unwrap();
    let out = pcr(
        dir.path(),
        &["search", "--query-text", "construction delays everywhere always", "--k", "5"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("1 p2 "), "expected p2 first, got {first:?}");
}

#[test]
fn external_vectors_with_augmented_rows_exit_2() {
    let dir = setup();
    let vectors = "pcr-vectors v1 dim=2\np1\t1 0\np2\t0 1\np3\t1 1\nq1\t1 0\nq2\t0 1\n";
    fs::write(dir.path().join("vectors.txt"), vectors).unwrap();
    let config = CONFIG.replace(
        "[eval]",
        "[retriever]\nkind = \"dense\"\n\n[embed]\nkind = \"external\"\nvectors = \"vectors.txt\"\n\n[eval]",
    );
    fs::write(dir.path().join("pcr.toml"), config).unwrap();
    let out = pcr(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("augmented"), "{}", stderr(&out));

    // Free text cannot be embedded by id-keyed vectors either.
    let search = pcr(dir.path(), &["search", "--query-text", "anything"]);
    assert_eq!(search.status.code(), Some(2), "{}", stderr(&search));

    // Facts-only dense retrieval over external vectors is fine.
    let ok = pcr(dir.path(), &["evaluate", "--row", "baseline"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn out_dir_override_is_respected() {
    let dir = setup();
    let out = pcr(dir.path(), &["index", "--out", "elsewhere"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("elsewhere/index.bin").exists());
    assert!(!dir.path().join("out/index.bin").exists());
}
