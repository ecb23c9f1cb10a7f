//! Text embeddings: a corpus-fitted TF-IDF provider, an external-vector
//! import path, and cosine similarity.
//!
//! TF-IDF keeps everything deterministic and gives positive semi-definite
//! cosine Gram matrices, which the DPP kernel requires. Real neural vectors
//! can be dropped in through the `pcr-vectors` file format instead.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::corpus::Corpus;
use crate::textproc::tokenize;

pub const VECTORS_HEADER_PREFIX: &str = "pcr-vectors v1 dim=";

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("bad vectors header (expected {VECTORS_HEADER_PREFIX}<D>): {found:?}")]
    BadHeader { found: String },
    #[error("vectors line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("no stored vector for key {key:?}")]
    UnknownKey { key: String },
}

/// Dense vector with a provider-fixed dimension. The zero vector stands in
/// for empty or fully out-of-vocabulary text.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zero(dimension: usize) -> Self {
        Self { values: vec![0.0; dimension] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Standard cosine similarity, defined as 0 when either vector is zero so
/// kernels never see NaN. Result clamped to [-1, 1].
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, EmbedError> {
    if u.dimension() != v.dimension() {
        return Err(EmbedError::DimensionMismatch { left: u.dimension(), right: v.dimension() });
    }
    let nu = u.l2_norm();
    let nv = v.l2_norm();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Source of embedding vectors. Implementations are immutable once built,
/// so shared references can be used across threads.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;

    /// Embeds free text. For stored-vector providers the text is the lookup
    /// key (normalized concept text), and unknown keys are an error.
    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError>;

    /// Embeds a document. Fitted providers embed the text; stored-vector
    /// providers look the id up instead.
    fn embed_document(&self, id: &str, text: &str) -> Result<Embedding, EmbedError> {
        let _ = id;
        self.embed_text(text)
    }
}

/// Which document fields feed vocabulary fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSelector {
    Facts,
    Reasoning,
    Both,
}

impl FieldSelector {
    pub fn select(self, facts: &str, reasoning: &str) -> String {
        match self {
            FieldSelector::Facts => facts.to_string(),
            FieldSelector::Reasoning => reasoning.to_string(),
            FieldSelector::Both => format!("{facts}\n{reasoning}"),
        }
    }
}

/// TF-IDF model with idf(t) = ln(N/df(t)) + 1 over raw term counts,
/// L2-normalized at embed time. Vocabulary columns are assigned in
/// lexicographic term order.
#[derive(Debug, Clone)]
pub struct TfidfModel {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    df: Vec<usize>,
    n_docs: usize,
}

impl TfidfModel {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).map(|&i| self.df[i])
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }
}

/// Fits TF-IDF over the selected field of every corpus document.
pub fn fit_tfidf(corpus: &Corpus, field: FieldSelector) -> Result<TfidfModel, EmbedError> {
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    // BTreeMap makes column order lexicographic, hence reproducible.
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus.iter() {
        let text = field.select(&doc.facts, &doc.reasoning);
        let mut seen = HashSet::new();
        for token in tokenize(&text) {
            if seen.insert(token.text.clone()) {
                *df.entry(token.text).or_insert(0) += 1;
            }
        }
    }
    let n_docs = corpus.len();
    let mut vocabulary = HashMap::with_capacity(df.len());
    let mut idf = Vec::with_capacity(df.len());
    let mut df_table = Vec::with_capacity(df.len());
    for (i, (term, count)) in df.into_iter().enumerate() {
        vocabulary.insert(term, i);
        idf.push((n_docs as f64 / count as f64).ln() + 1.0);
        df_table.push(count);
    }
    Ok(TfidfModel { vocabulary, idf, df: df_table, n_docs })
}

impl EmbeddingProvider for TfidfModel {
    fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut values = vec![0.0; self.vocabulary.len()];
        for token in tokenize(text) {
            if let Some(&col) = self.vocabulary.get(&token.text) {
                values[col] += self.idf[col];
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(Embedding::new(values))
    }
}

/// Stored vectors keyed by document id or normalized concept text, served
/// verbatim (no re-normalization).
#[derive(Debug, Clone)]
pub struct ExternalVectors {
    dimension: usize,
    vectors: HashMap<String, Embedding>,
}

impl ExternalVectors {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    pub fn from_entries(
        dimension: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbedError> {
        let mut vectors = HashMap::new();
        for (i, (key, values)) in entries.into_iter().enumerate() {
            let row = i + 1;
            validate_row(dimension, row, &key, &values, &vectors)?;
            vectors.insert(key, Embedding::new(values));
        }
        Ok(Self { dimension, vectors })
    }

    /// Writes the `pcr-vectors v1` format, rows sorted by key. Floats use
    /// the shortest decimal form that parses back bit-exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        let mut out = format!("{}{}\n", VECTORS_HEADER_PREFIX, self.dimension);
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        for key in keys {
            let values: Vec<String> =
                self.vectors[key].values().iter().map(|v| format!("{v}")).collect();
            out.push_str(key);
            out.push('\t');
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| EmbedError::Io { path: path.to_path_buf(), source })
    }
}

fn validate_row(
    dimension: usize,
    row: usize,
    key: &str,
    values: &[f64],
    existing: &HashMap<String, Embedding>,
) -> Result<(), EmbedError> {
    let err = |reason: String| EmbedError::BadRow { line: row, reason };
    if key.is_empty() {
        return Err(err("empty key".to_string()));
    }
    if existing.contains_key(key) {
        return Err(err(format!("duplicate key {key:?}")));
    }
    if values.len() != dimension {
        return Err(err(format!(
            "key {key:?} has {} components, header declares {dimension}",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(err(format!("key {key:?} has non-finite component {bad}")));
    }
    Ok(())
}

/// Loads a `pcr-vectors v1 dim=<D>` file: one `key<TAB>f1 f2 ... fD` row
/// per line. Keys may contain spaces; the first tab separates key from
/// components.
pub fn load_external_vectors(path: impl AsRef<Path>) -> Result<ExternalVectors, EmbedError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|source| EmbedError::Io { path: path.to_path_buf(), source })?;
    let mut lines = content.lines().enumerate();

    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    let dimension: usize = header
        .strip_prefix(VECTORS_HEADER_PREFIX)
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| EmbedError::BadHeader { found: header.to_string() })?;

    let mut vectors = HashMap::new();
    for (i, line) in lines {
        let row = i + 1;
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| EmbedError::BadRow { line: row, reason };
        let (key, rest) =
            line.split_once('\t').ok_or_else(|| err("expected key<TAB>components".to_string()))?;
        let values = rest
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| err(format!("bad float {s:?}: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        validate_row(dimension, row, key, &values, &vectors)?;
        vectors.insert(key.to_string(), Embedding::new(values));
    }
    Ok(ExternalVectors { dimension, vectors })
}

impl EmbeddingProvider for ExternalVectors {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::UnknownKey { key: text.to_string() })
    }

    fn embed_document(&self, id: &str, _text: &str) -> Result<Embedding, EmbedError> {
        self.embed_text(id)
    }
}
