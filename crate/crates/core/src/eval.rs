//! Ranking metrics (Recall@k, average precision), concept-coverage
//! metrics, and a deterministic experiment runner that scores one report
//! row per retrieval configuration over a chronological query slice.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::concepts::{
    sample_noisy_concepts, ConceptError, ConceptExtractor, ConceptStore, ExtractionConfig,
};
use crate::corpus::{Corpus, CorpusError};
use crate::embed::{
    fit_tfidf, load_external_vectors, EmbedError, EmbeddingProvider, FieldSelector,
};
use crate::retrieve::{
    augment_query, build_index, search_bm25, search_dense, Bm25Params, IndexField, RankedRun,
    RetrieveError,
};
use crate::textproc::{tokenize, LexiconTagger, TagLexicon};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("query {query_id:?} has an empty relevant set; filter such queries out first")]
    EmptyRelevantSet { query_id: String },
    #[error("experiment config lists no rows")]
    NoRows,
    #[error("conflicting configuration: {reason}")]
    ConfigConflict { reason: String },
    #[error("imported-concept file {path} does not exist")]
    MissingConceptFile { path: PathBuf },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
}

/// Fraction of the relevant set found in the top k: |top-k ∩ relevant| / |relevant|.
pub fn recall_at_k(
    run: &RankedRun,
    relevant: &BTreeSet<String>,
    k: usize,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet { query_id: run.query_id.clone() });
    }
    let hits = run.ranking.iter().take(k).filter(|s| relevant.contains(&s.doc_id)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Mean of precision@r over the ranks r holding a relevant document;
/// relevant documents absent from the ranking contribute zero.
pub fn average_precision(run: &RankedRun, relevant: &BTreeSet<String>) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet { query_id: run.query_id.clone() });
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, scored) in run.ranking.iter().enumerate() {
        if relevant.contains(&scored.doc_id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Word-level and phrase-level coverage of a concept list against a
/// reasoning text, both as percentages of lowercased-token matches. Word
/// coverage counts distinct concept words present anywhere in the
/// reasoning; phrase coverage counts concepts whose full token sequence
/// appears contiguously. An empty concept list scores (0, 0).
pub fn concept_coverage(concepts: &[String], reasoning: &str) -> (f64, f64) {
    if concepts.is_empty() {
        return (0.0, 0.0);
    }
    let reasoning_tokens: Vec<String> = tokenize(reasoning).into_iter().map(|t| t.text).collect();
    let reasoning_set: HashSet<&str> = reasoning_tokens.iter().map(String::as_str).collect();

    let mut words: BTreeSet<String> = BTreeSet::new();
    let mut covered_concepts = 0usize;
    for concept in concepts {
        let needle: Vec<String> = tokenize(concept).into_iter().map(|t| t.text).collect();
        words.extend(needle.iter().cloned());
        // A concept with no tokens cannot be located, so it never counts.
        if !needle.is_empty()
            && reasoning_tokens.windows(needle.len()).any(|w| w == needle.as_slice())
        {
            covered_concepts += 1;
        }
    }
    let word_cov = if words.is_empty() {
        0.0
    } else {
        100.0 * words.iter().filter(|w| reasoning_set.contains(w.as_str())).count() as f64
            / words.len() as f64
    };
    let concept_cov = 100.0 * covered_concepts as f64 / concepts.len() as f64;
    (word_cov, concept_cov)
}

/// Recall at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub k: usize,
    pub value: f64,
}

/// Metrics for a single evaluated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub relevant: usize,
    pub pool_size: usize,
    pub recall: Vec<RecallAt>,
    pub average_precision: f64,
}

/// One configuration's scores: macro averages are the plain means of the
/// per-query values; queries without labels are excluded and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub query_count: usize,
    pub skipped_without_labels: usize,
    pub recall: Vec<RecallAt>,
    pub map: f64,
    pub per_query: Vec<QueryMetrics>,
}

/// A labeled report row, e.g. "baseline" or "+oracle".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub report: EvalReport,
}

/// Full experiment output: one row per configured concept source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fingerprint: String,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn row(&self, label: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.report)
    }

    /// Deterministic machine-readable form; field order is fixed by the
    /// struct definitions, so equal reports serialize to equal bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per configuration.
    pub fn to_text_table(&self) -> String {
        let ks: Vec<usize> = self
            .rows
            .first()
            .map(|r| r.report.recall.iter().map(|r| r.k).collect())
            .unwrap_or_default();
        let label_width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain(std::iter::once("configuration".len()))
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = write!(out, "{:<label_width$}", "configuration");
        for k in &ks {
            let _ = write!(out, "  {:>8}", format!("R@{k}"));
        }
        let _ = writeln!(out, "  {:>8}  {:>7}  {:>7}", "MAP", "queries", "skipped");
        for row in &self.rows {
            let _ = write!(out, "{:<label_width$}", row.label);
            for r in &row.report.recall {
                let _ = write!(out, "  {:>8.4}", r.value);
            }
            let _ = writeln!(
                out,
                "  {:>8.4}  {:>7}  {:>7}",
                row.report.map, row.report.query_count, row.report.skipped_without_labels
            );
        }
        out
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn check_k_set(k_set: &[usize]) -> Result<(), EvalError> {
    if k_set.is_empty() || k_set.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    Ok(())
}

fn score_runs(
    runs: &[RankedRun],
    corpus: &Corpus,
    k_set: &[usize],
    fingerprint: String,
) -> Result<EvalReport, EvalError> {
    check_k_set(k_set)?;
    let mut per_query = Vec::new();
    let mut skipped = 0usize;
    for run in runs {
        let labels = corpus.relevance_labels(&run.query_id)?;
        if labels.is_empty() {
            skipped += 1;
            continue;
        }
        let mut recall = Vec::with_capacity(k_set.len());
        for &k in k_set {
            recall.push(RecallAt { k, value: recall_at_k(run, &labels, k)? });
        }
        per_query.push(QueryMetrics {
            query_id: run.query_id.clone(),
            relevant: labels.len(),
            pool_size: run.len(),
            recall,
            average_precision: average_precision(run, &labels)?,
        });
    }
    let n = per_query.len();
    let mean = |values: &mut dyn Iterator<Item = f64>| -> f64 {
        if n == 0 {
            0.0
        } else {
            values.sum::<f64>() / n as f64
        }
    };
    let recall = k_set
        .iter()
        .enumerate()
        .map(|(i, &k)| RecallAt {
            k,
            value: mean(&mut per_query.iter().map(|q| q.recall[i].value)),
        })
        .collect();
    let map = mean(&mut per_query.iter().map(|q| q.average_precision));
    Ok(EvalReport {
        fingerprint,
        query_count: n,
        skipped_without_labels: skipped,
        recall,
        map,
        per_query,
    })
}

/// Scores a set of ranked runs against the corpus citation labels.
pub fn evaluate_run_set(
    runs: &[RankedRun],
    corpus: &Corpus,
    k_set: &[usize],
) -> Result<EvalReport, EvalError> {
    let fingerprint = format!("{:016x}", fnv1a64(format!("k_set={k_set:?}").as_bytes()));
    score_runs(runs, corpus, k_set, fingerprint)
}

/// Retrieval backend for the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrieverKind {
    Bm25,
    Dense,
}

/// Where each row's query concepts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceptSource {
    /// Facts only.
    None,
    /// Concepts read from the configured concept file.
    ImportedFile,
    /// Imported concepts plus sampled donor noise.
    ImportedPlusNoise,
    /// Concepts extracted from the query's own reasoning (upper bound).
    ExtractedOracle,
}

impl ConceptSource {
    pub fn label(self) -> &'static str {
        match self {
            ConceptSource::None => "baseline",
            ConceptSource::ImportedFile => "+concepts",
            ConceptSource::ImportedPlusNoise => "+concepts+noise",
            ConceptSource::ExtractedOracle => "+oracle",
        }
    }
}

/// Experiment manifest. The `Debug` rendering of this struct is hashed
/// into the report fingerprint, so field order and names are part of the
/// output contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub retriever: RetrieverKind,
    pub rows: Vec<ConceptSource>,
    pub k_set: Vec<usize>,
    pub extraction: ExtractionConfig,
    /// How many times the concept block is appended to the query.
    pub repeat: usize,
    /// Donor concepts sampled per query for the noise row.
    pub noise_count: usize,
    pub seed: u64,
    pub bm25: Bm25Params,
    pub concept_file: Option<PathBuf>,
    pub vectors_file: Option<PathBuf>,
    /// Chronological evaluation slice; `None` bounds are open.
    pub eval_start: Option<NaiveDate>,
    pub eval_end: Option<NaiveDate>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            retriever: RetrieverKind::Bm25,
            rows: vec![ConceptSource::None, ConceptSource::ExtractedOracle],
            k_set: vec![50, 100, 500, 1000],
            extraction: ExtractionConfig::default(),
            repeat: 1,
            noise_count: 2,
            seed: 0,
            bm25: Bm25Params::default(),
            concept_file: None,
            vectors_file: None,
            eval_start: None,
            eval_end: None,
        }
    }
}

impl ExperimentConfig {
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a64(format!("{self:?}").as_bytes()))
    }
}

/// Runs every configured row over the evaluation slice: for each query,
/// build its candidate pool, assemble the (possibly augmented) query text,
/// rank the whole pool, and score against citation labels. Deterministic
/// per config; the noise row reseeds per query from the config seed.
pub fn run_experiment(
    corpus: &Corpus,
    config: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    if config.rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    check_k_set(&config.k_set)?;
    let augmented_rows = config.rows.iter().any(|&r| r != ConceptSource::None);
    if config.retriever == RetrieverKind::Dense && config.vectors_file.is_some() && augmented_rows {
        return Err(EvalError::ConfigConflict {
            reason: "external document vectors are keyed by id and ignore augmented query text; \
                     use the tfidf embedder or facts-only rows"
                .to_string(),
        });
    }

    let needs_imported = config
        .rows
        .iter()
        .any(|&r| matches!(r, ConceptSource::ImportedFile | ConceptSource::ImportedPlusNoise));
    let imported: Option<ConceptStore> = if needs_imported {
        match &config.concept_file {
            Some(path) => {
                if !path.exists() {
                    return Err(EvalError::MissingConceptFile { path: path.clone() });
                }
                Some(ConceptStore::load(path)?)
            }
            None => {
                return Err(EvalError::ConfigConflict {
                    reason: "imported-concept rows need a concept file".to_string(),
                })
            }
        }
    } else {
        None
    };

    let needs_oracle = config.rows.contains(&ConceptSource::ExtractedOracle);
    let dense = config.retriever == RetrieverKind::Dense;
    // One text embedder serves both concept extraction and dense retrieval;
    // it is fitted on facts and reasoning so concept vocabulary stays known.
    let tfidf = if needs_oracle || (dense && config.vectors_file.is_none()) {
        Some(fit_tfidf(corpus, FieldSelector::Both)?)
    } else {
        None
    };
    let external = match (&config.vectors_file, dense) {
        (Some(path), true) => Some(load_external_vectors(path)?),
        _ => None,
    };
    let dense_provider: Option<&dyn EmbeddingProvider> = if dense {
        Some(match &external {
            Some(vectors) => vectors,
            None => tfidf.as_ref().expect("tfidf fitted for dense retrieval"),
        })
    } else {
        None
    };
    let index =
        if dense { None } else { Some(build_index(corpus, IndexField::Facts, None, config.bm25)?) };

    let tagger = LexiconTagger::new(TagLexicon::bundled());
    let in_slice = |date: NaiveDate| {
        config.eval_start.is_none_or(|s| date >= s) && config.eval_end.is_none_or(|e| date <= e)
    };
    let queries: Vec<_> = corpus.iter().filter(|d| in_slice(d.date)).collect();

    let fingerprint = config.fingerprint();
    let mut rows = Vec::with_capacity(config.rows.len());
    for &source in &config.rows {
        let extractor =
            tfidf.as_ref().map(|p| ConceptExtractor::new(p, &tagger, config.extraction.clone()));
        let mut runs = Vec::with_capacity(queries.len());
        for query in &queries {
            let pool = corpus.candidate_pool(&query.id)?;
            let concepts: Vec<String> = match source {
                ConceptSource::None => Vec::new(),
                ConceptSource::ImportedFile => imported
                    .as_ref()
                    .expect("checked above")
                    .get(&query.id)
                    .map(<[String]>::to_vec)
                    .unwrap_or_default(),
                ConceptSource::ImportedPlusNoise => {
                    let store = imported.as_ref().expect("checked above");
                    let mut c = store.get(&query.id).map(<[String]>::to_vec).unwrap_or_default();
                    let seed = config.seed.wrapping_add(fnv1a64(query.id.as_bytes()));
                    c.extend(sample_noisy_concepts(store, &query.id, config.noise_count, seed)?);
                    c
                }
                ConceptSource::ExtractedOracle => {
                    extractor
                        .as_ref()
                        .expect("tfidf fitted for oracle")
                        .select_key_concepts(query)?
                        .concepts
                }
            };
            let text = augment_query(&query.facts, &concepts, config.repeat);
            let run = match config.retriever {
                RetrieverKind::Bm25 => search_bm25(
                    index.as_ref().expect("index built for bm25"),
                    &query.id,
                    &text,
                    &pool,
                    pool.len(),
                )?,
                RetrieverKind::Dense => search_dense(
                    dense_provider.expect("provider built for dense"),
                    &query.id,
                    &text,
                    corpus,
                    &pool,
                    pool.len(),
                )?,
            };
            runs.push(run);
        }
        let report = score_runs(&runs, corpus, &config.k_set, fingerprint.clone())?;
        rows.push(ExperimentRow { label: source.label().to_string(), report });
    }
    Ok(ExperimentReport { fingerprint, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::retrieve::ScoredDoc;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn run_of(query_id: &str, ids: &[&str]) -> RankedRun {
        let n = ids.len();
        RankedRun {
            query_id: query_id.to_string(),
            ranking: ids
                .iter()
                .enumerate()
                .map(|(i, id)| ScoredDoc { doc_id: id.to_string(), score: (n - i) as f64 })
                .collect(),
        }
    }

    fn relevant(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recall_examples() {
        let run = run_of("q", &["a", "x", "b"]);
        let rel = relevant(&["a", "b"]);
        assert_relative_eq!(recall_at_k(&run, &rel, 2).unwrap(), 0.5);
        assert_relative_eq!(recall_at_k(&run, &rel, 3).unwrap(), 1.0);
        assert_relative_eq!(recall_at_k(&run, &rel, 100).unwrap(), 1.0);
        assert!(matches!(recall_at_k(&run, &rel, 0), Err(EvalError::ZeroK)));
        assert!(matches!(
            recall_at_k(&run, &BTreeSet::new(), 1),
            Err(EvalError::EmptyRelevantSet { .. })
        ));
    }

    #[test]
    fn recall_matches_brute_force_intersection() {
        let run = run_of("q", &["d3", "d1", "d7", "d2", "d9", "d0", "d5", "d4", "d8", "d6"]);
        let rel = relevant(&["d1", "d4", "d6", "d9"]);
        for k in 1..=10 {
            let top: BTreeSet<String> =
                run.ranking.iter().take(k).map(|s| s.doc_id.clone()).collect();
            let expected = top.intersection(&rel).count() as f64 / rel.len() as f64;
            assert_relative_eq!(recall_at_k(&run, &rel, k).unwrap(), expected);
        }
    }

    #[test]
    fn average_precision_examples() {
        let rel = relevant(&["a", "b"]);
        let ap = average_precision(&run_of("q", &["a", "x", "b"]), &rel).unwrap();
        assert_relative_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(ap, 0.8333, epsilon = 1e-4);

        // All relevant at the top, either order.
        assert_relative_eq!(average_precision(&run_of("q", &["a", "b", "x"]), &rel).unwrap(), 1.0);
        assert_relative_eq!(average_precision(&run_of("q", &["b", "a", "x"]), &rel).unwrap(), 1.0);
        // Nothing relevant retrieved.
        assert_relative_eq!(average_precision(&run_of("q", &["x", "y"]), &rel).unwrap(), 0.0);
        // A relevant doc missing from the run contributes zero.
        assert_relative_eq!(average_precision(&run_of("q", &["a"]), &rel).unwrap(), 0.5);
    }

    #[test]
    fn perfect_ap_means_relevant_docs_lead() {
        let rel = relevant(&["a", "b"]);
        assert!(average_precision(&run_of("q", &["a", "x", "b"]), &rel).unwrap() < 1.0);
        assert_relative_eq!(average_precision(&run_of("q", &["b", "a"]), &rel).unwrap(), 1.0);
    }

    #[test]
    fn coverage_examples() {
        let verbatim = vec!["speedy trial".to_string()];
        assert_eq!(concept_coverage(&verbatim, "the speedy trial was granted"), (100.0, 100.0));

        let disjoint = vec!["alpha beta".to_string()];
        assert_eq!(concept_coverage(&disjoint, "gamma delta"), (0.0, 0.0));

        let mixed = vec!["a b".to_string(), "c z".to_string()];
        assert_eq!(concept_coverage(&mixed, "a b c"), (75.0, 50.0));

        assert_eq!(concept_coverage(&[], "anything"), (0.0, 0.0));

        // Matching is on lowercased tokens.
        let cased = vec!["Lawful Detention".to_string()];
        assert_eq!(concept_coverage(&cased, "the lawful detention continued"), (100.0, 100.0));

        // Phrase coverage needs contiguity.
        let split = vec!["a c".to_string()];
        assert_eq!(concept_coverage(&split, "a b c"), (100.0, 0.0));
    }

    fn doc(id: &str, date: &str, facts: &str, reasoning: &str) -> Document {
        Document {
            id: id.to_string(),
            date: date.parse().unwrap(),
            facts: facts.to_string(),
            reasoning: reasoning.to_string(),
        }
    }

    /// Three prior cases and two query cases with citation labels.
    fn labeled_corpus() -> Corpus {
        Corpus::from_documents(vec![
            doc("p1", "2000-01-01", "zoning permit dispute boundary quarrel", ""),
            doc("p2", "2000-02-01", "construction delays everywhere always", ""),
            doc("p3", "2000-03-01", "fishing licence revoked unfairly", ""),
            doc(
                "q1",
                "2010-01-01",
                "construction delays administrative silence",
                "The zoning permit dispute standard applies here; see [[CITE:p1]].",
            ),
            doc(
                "q2",
                "2010-02-01",
                "boat licence paperwork lost",
                "Compare the revoked fishing licence in [[CITE:p3]] and [[CITE:p1]].",
            ),
        ])
        .unwrap()
    }

    #[test]
    fn run_set_macro_averages_are_means() {
        let corpus = labeled_corpus();
        // q1: relevant {p1}; q2: relevant {p1, p3}.
        let runs = vec![
            run_of("q1", &["p1", "p2", "p3"]), // AP 1.0
            run_of("q2", &["p2", "p1", "p3"]), // AP (1/2 + 2/3)/2
        ];
        let report = evaluate_run_set(&runs, &corpus, &[1, 2]).unwrap();
        assert_eq!(report.query_count, 2);
        assert_eq!(report.skipped_without_labels, 0);
        let ap2 = (0.5 + 2.0 / 3.0) / 2.0;
        assert_relative_eq!(report.map, (1.0 + ap2) / 2.0, epsilon = 1e-12);
        // R@1: q1 hits p1 → 1.0; q2 top-1 is p2 → 0.0.
        assert_relative_eq!(report.recall[0].value, 0.5, epsilon = 1e-12);
        // R@2: q1 → 1.0; q2 finds p1 of {p1,p3} → 0.5.
        assert_relative_eq!(report.recall[1].value, 0.75, epsilon = 1e-12);
        for q in &report.per_query {
            assert!(q.average_precision >= 0.0 && q.average_precision <= 1.0);
        }

        let single = evaluate_run_set(&runs[..1], &corpus, &[1, 2]).unwrap();
        assert_eq!(single.map, single.per_query[0].average_precision);
        assert_eq!(single.recall[0].value, single.per_query[0].recall[0].value);
    }

    #[test]
    fn run_set_skips_and_counts_unlabeled_queries() {
        let corpus = labeled_corpus();
        // p3 has no citations, so it carries no labels.
        let runs = vec![run_of("q1", &["p1", "p2"]), run_of("p3", &["p1"])];
        let report = evaluate_run_set(&runs, &corpus, &[1]).unwrap();
        assert_eq!(report.query_count, 1);
        assert_eq!(report.skipped_without_labels, 1);
        assert_relative_eq!(report.map, 1.0);
    }

    #[test]
    fn run_set_rejects_bad_k_sets() {
        let corpus = labeled_corpus();
        let runs = vec![run_of("q1", &["p1"])];
        assert!(matches!(evaluate_run_set(&runs, &corpus, &[]), Err(EvalError::ZeroK)));
        assert!(matches!(evaluate_run_set(&runs, &corpus, &[1, 0]), Err(EvalError::ZeroK)));
    }

    fn experiment_config() -> ExperimentConfig {
        ExperimentConfig {
            rows: vec![ConceptSource::None, ConceptSource::ExtractedOracle],
            k_set: vec![1, 3],
            extraction: ExtractionConfig {
                budget: 5,
                stop_on_nonpositive_gain: false,
                max_phrase_tokens: 8,
            },
            eval_start: Some("2005-01-01".parse().unwrap()),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn oracle_concepts_lift_map_over_baseline() {
        let corpus = labeled_corpus();
        let report = run_experiment(&corpus, &experiment_config()).unwrap();
        let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["baseline", "+oracle"]);
        let baseline = report.row("baseline").unwrap();
        let oracle = report.row("+oracle").unwrap();
        assert_eq!(baseline.query_count, 2);
        // q1's facts share nothing with p1 but its reasoning names the
        // zoning permit dispute, so the oracle row must rank p1 higher.
        assert!(
            oracle.map > baseline.map,
            "oracle MAP {} must beat baseline MAP {}",
            oracle.map,
            baseline.map
        );
    }

    #[test]
    fn experiments_are_deterministic() {
        let corpus = labeled_corpus();
        let config = experiment_config();
        let a = run_experiment(&corpus, &config).unwrap();
        let b = run_experiment(&corpus, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.fingerprint, config.fingerprint());
        assert_eq!(a.rows[0].report.fingerprint, a.fingerprint);
    }

    #[test]
    fn noise_rows_leave_other_rows_untouched() {
        let corpus = labeled_corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("concepts.jsonl");
        let mut store = ConceptStore::new();
        store.insert("q1", vec!["zoning permit dispute".to_string()]);
        store.insert("q2", vec!["revoked fishing licence".to_string()]);
        store.save(&path).unwrap();

        let base = ExperimentConfig {
            rows: vec![
                ConceptSource::None,
                ConceptSource::ImportedFile,
                ConceptSource::ImportedPlusNoise,
            ],
            k_set: vec![1, 3],
            concept_file: Some(path),
            eval_start: Some("2005-01-01".parse().unwrap()),
            ..ExperimentConfig::default()
        };
        let seeded = |seed: u64| {
            run_experiment(&corpus, &ExperimentConfig { seed, ..base.clone() }).unwrap()
        };
        let a = seeded(1);
        let b = seeded(2);
        // Only the noise row's metrics may depend on the seed. Fingerprints
        // hash the whole config, so they differ by construction.
        let metrics = |r: &EvalReport| EvalReport { fingerprint: String::new(), ..r.clone() };
        assert_eq!(metrics(a.row("baseline").unwrap()), metrics(b.row("baseline").unwrap()));
        assert_eq!(metrics(a.row("+concepts").unwrap()), metrics(b.row("+concepts").unwrap()));
        assert_eq!(a.rows.len(), 3);
        // Same seed replays the noise row exactly.
        assert_eq!(seeded(1), a);
    }

    #[test]
    fn config_errors_are_descriptive() {
        let corpus = labeled_corpus();
        let mut config = experiment_config();
        config.rows = vec![];
        assert!(matches!(run_experiment(&corpus, &config), Err(EvalError::NoRows)));

        let mut config = experiment_config();
        config.k_set = vec![0];
        assert!(matches!(run_experiment(&corpus, &config), Err(EvalError::ZeroK)));

        let mut config = experiment_config();
        config.rows = vec![ConceptSource::ImportedFile];
        assert!(matches!(run_experiment(&corpus, &config), Err(EvalError::ConfigConflict { .. })));

        config.concept_file = Some(PathBuf::from("/nonexistent/concepts.jsonl"));
        assert!(matches!(
            run_experiment(&corpus, &config),
            Err(EvalError::MissingConceptFile { .. })
        ));

        let mut config = experiment_config();
        config.retriever = RetrieverKind::Dense;
        config.vectors_file = Some(PathBuf::from("vectors.txt"));
        assert!(matches!(run_experiment(&corpus, &config), Err(EvalError::ConfigConflict { .. })));
    }

    #[test]
    fn dense_tfidf_experiment_runs() {
        let corpus = labeled_corpus();
        let mut config = experiment_config();
        config.retriever = RetrieverKind::Dense;
        let report = run_experiment(&corpus, &config).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.report.query_count, 2);
            assert!(row.report.map >= 0.0 && row.report.map <= 1.0);
        }
    }

    #[test]
    fn eval_slice_filters_queries() {
        let corpus = labeled_corpus();
        let mut config = experiment_config();
        config.eval_start = Some("2010-01-15".parse().unwrap());
        let report = run_experiment(&corpus, &config).unwrap();
        assert_eq!(report.rows[0].report.query_count, 1);
        assert_eq!(report.rows[0].report.per_query[0].query_id, "q2");

        config.eval_end = Some("2010-01-20".parse().unwrap());
        let report = run_experiment(&corpus, &config).unwrap();
        assert_eq!(report.rows[0].report.query_count, 0);
        assert_eq!(report.rows[0].report.map, 0.0);
    }

    #[test]
    fn text_table_lists_every_row_and_cutoff() {
        let corpus = labeled_corpus();
        let report = run_experiment(&corpus, &experiment_config()).unwrap();
        let table = report.to_text_table();
        assert!(table.contains("configuration"));
        assert!(table.contains("R@1"));
        assert!(table.contains("R@3"));
        assert!(table.contains("MAP"));
        assert!(table.contains("baseline"));
        assert!(table.contains("+oracle"));
        assert_eq!(table.lines().count(), 3);
    }

    prop_compose! {
        fn ranking_and_labels()(
            n in 1usize..12,
            seed in 0u64..1000,
        ) -> (Vec<String>, BTreeSet<String>) {
            let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
            let mut order = ids.clone();
            // Cheap deterministic shuffle.
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (state as usize) % (i + 1));
            }
            let rel: BTreeSet<String> =
                ids.iter().filter(|id| fnv1a64(id.as_bytes()).wrapping_add(seed) % 3 == 0).cloned().collect();
            (order, rel)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recall_is_monotone_and_bounded((order, rel) in ranking_and_labels()) {
            prop_assume!(!rel.is_empty());
            let refs: Vec<&str> = order.iter().map(String::as_str).collect();
            let run = run_of("q", &refs);
            let mut previous = 0.0;
            for k in 1..=order.len() + 2 {
                let r = recall_at_k(&run, &rel, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r >= previous);
                previous = r;
            }
            prop_assert_eq!(previous, 1.0, "full-depth recall over an all-id ranking");
        }

        #[test]
        fn ap_matches_definitional_recomputation((order, rel) in ranking_and_labels()) {
            prop_assume!(!rel.is_empty());
            let refs: Vec<&str> = order.iter().map(String::as_str).collect();
            let run = run_of("q", &refs);
            let ap = average_precision(&run, &rel).unwrap();
            // Definition: mean over relevant docs of precision at their rank.
            let mut total = 0.0;
            for target in &rel {
                if let Some(pos) = order.iter().position(|id| id == target) {
                    let hits_to_here =
                        order[..=pos].iter().filter(|id| rel.contains(*id)).count();
                    total += hits_to_here as f64 / (pos + 1) as f64;
                }
            }
            prop_assert!((ap - total / rel.len() as f64).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ap));
        }

        #[test]
        fn macro_metrics_ignore_query_order(seedswap in 0usize..2) {
            let corpus = labeled_corpus();
            let mut runs = vec![
                run_of("q1", &["p1", "p2", "p3"]),
                run_of("q2", &["p2", "p1", "p3"]),
            ];
            if seedswap == 1 {
                runs.reverse();
            }
            let report = evaluate_run_set(&runs, &corpus, &[1, 2]).unwrap();
            prop_assert!((report.map - ((1.0 + (0.5 + 2.0 / 3.0) / 2.0) / 2.0)).abs() < 1e-12);
            prop_assert!((report.recall[0].value - 0.5).abs() < 1e-12);
        }

        #[test]
        fn coverage_is_bounded_and_consistent(
            concepts in prop::collection::vec("[a-c]{1,2}( [a-c]{1,2}){0,2}", 0..5),
            reasoning in "[a-c ]{0,30}",
        ) {
            let owned: Vec<String> = concepts.clone();
            let (word_cov, concept_cov) = concept_coverage(&owned, &reasoning);
            prop_assert!((0.0..=100.0).contains(&word_cov));
            prop_assert!((0.0..=100.0).contains(&concept_cov));
            if concept_cov == 100.0 && !owned.is_empty() {
                prop_assert!((word_cov - 100.0).abs() < 1e-12);
            }
        }
    }
}
