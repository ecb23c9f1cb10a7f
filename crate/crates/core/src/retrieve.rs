//! BM25 inverted index with binary persistence, exact dense scoring over an
//! embedding provider, query augmentation, and top-k search over candidate
//! pools. Ranking ties keep pool order, which callers supply in (date, id)
//! order, so runs are fully deterministic.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use std::collections::BTreeMap;

use crate::concepts::ConceptStore;
use crate::corpus::Corpus;
use crate::embed::{EmbedError, EmbeddingProvider};
use crate::textproc::tokenize;

const INDEX_MAGIC: &[u8; 6] = b"PCRIDX";
const INDEX_VERSION: u8 = b'1';

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("facts+concepts indexing needs a concept store")]
    MissingConcepts,
    #[error("document {id:?} is not in the index")]
    UnknownDocument { id: String },
    #[error("bad BM25 parameters: {reason}")]
    BadParams { reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a BM25 index file (bad magic)")]
    BadMagic,
    #[error("unsupported index version byte {found:#04x}")]
    VersionMismatch { found: u8 },
    #[error("corrupt index file at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// BM25 free parameters. Defaults follow the common k1 = 1.2, b = 0.75.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    fn validate(self) -> Result<Self, RetrieveError> {
        if !self.k1.is_finite() || self.k1 < 0.0 {
            return Err(RetrieveError::BadParams {
                reason: format!("k1 = {} must be >= 0", self.k1),
            });
        }
        if !self.b.is_finite() || !(0.0..=1.0).contains(&self.b) {
            return Err(RetrieveError::BadParams {
                reason: format!("b = {} must be in [0, 1]", self.b),
            });
        }
        Ok(self)
    }
}

/// Which text each document contributes to the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexField {
    Facts,
    /// Facts plus the document's stored concepts, appended the same way
    /// [`augment_query`] appends them to a query.
    FactsAndConcepts,
}

/// Inverted BM25 index. Documents keep the order of the corpus they were
/// built from; postings are term-sorted with ascending document positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    doc_index: HashMap<String, usize>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.doc_index.get(id).map(|&i| self.doc_lengths[i])
    }

    /// Postings for a term as (document position, term frequency) pairs.
    pub fn postings(&self, term: &str) -> Option<&[(u32, u32)]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_frequency(&self, term: &str, doc_position: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&(doc_position as u32), |&(d, _)| d)
                    .ok()
                    .map(|i| list[i].1)
            })
            .unwrap_or(0)
    }

    fn score_position(&self, query_terms: &[(String, u32)], position: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let dl = self.doc_lengths[position] as f64;
        // All-empty corpora have avgdl 0; the length norm degrades to 1.
        let norm = if self.avgdl > 0.0 { 1.0 - b + b * dl / self.avgdl } else { 1.0 };
        let mut score = 0.0;
        for (term, qtf) in query_terms {
            let tf = self.term_frequency(term, position) as f64;
            if tf == 0.0 {
                continue;
            }
            score += (*qtf as f64) * self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        score
    }
}

/// Distinct query terms in first-occurrence order with their multiplicity.
fn query_terms(query_text: &str) -> Vec<(String, u32)> {
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for token in tokenize(query_text) {
        match seen.get(&token.text) {
            Some(&i) => order[i].1 += 1,
            None => {
                seen.insert(token.text.clone(), order.len());
                order.push((token.text, 1));
            }
        }
    }
    order
}

/// Builds the index over `tokenize` output of the selected field, documents
/// in corpus (date, id) order. `concepts` is required for
/// [`IndexField::FactsAndConcepts`]; documents missing from the store are
/// indexed on facts alone.
pub fn build_index(
    corpus: &Corpus,
    field: IndexField,
    concepts: Option<&ConceptStore>,
    params: Bm25Params,
) -> Result<Bm25Index, RetrieveError> {
    if corpus.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }
    let params = params.validate()?;
    if field == IndexField::FactsAndConcepts && concepts.is_none() {
        return Err(RetrieveError::MissingConcepts);
    }

    let mut doc_ids = Vec::with_capacity(corpus.len());
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    for (position, doc) in corpus.iter().enumerate() {
        let text = match field {
            IndexField::Facts => doc.facts.clone(),
            IndexField::FactsAndConcepts => {
                let stored = concepts.expect("checked above").get(&doc.id).unwrap_or(&[]);
                augment_query(&doc.facts, stored, 1)
            }
        };
        let mut counts: HashMap<String, u32> = HashMap::new();
        let mut length = 0u32;
        for token in tokenize(&text) {
            *counts.entry(token.text).or_insert(0) += 1;
            length += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push((position as u32, tf));
        }
        doc_ids.push(doc.id.clone());
        doc_lengths.push(length);
    }
    for list in postings.values_mut() {
        list.sort_unstable_by_key(|&(d, _)| d);
    }
    finish_index(params, doc_ids, doc_lengths, postings)
}

fn finish_index(
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
) -> Result<Bm25Index, RetrieveError> {
    let doc_index: HashMap<String, usize> =
        doc_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    let avgdl = if doc_ids.is_empty() { 0.0 } else { total as f64 / doc_ids.len() as f64 };
    Ok(Bm25Index { params, doc_ids, doc_lengths, doc_index, postings, avgdl })
}

/// BM25 score of a document for a tokenized query: sum over distinct query
/// terms of qtf * idf * tf*(k1+1) / (tf + k1*(1-b+b*dl/avgdl)) with
/// idf = ln(1 + (N-df+0.5)/(df+0.5)), which is always positive.
pub fn bm25_score(
    index: &Bm25Index,
    query_tokens: &[String],
    doc_id: &str,
) -> Result<f64, RetrieveError> {
    let &position = index
        .doc_index
        .get(doc_id)
        .ok_or_else(|| RetrieveError::UnknownDocument { id: doc_id.to_string() })?;
    let mut terms: Vec<(String, u32)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for token in query_tokens {
        match seen.get(token.as_str()) {
            Some(&i) => terms[i].1 += 1,
            None => {
                seen.insert(token, terms.len());
                terms.push((token.clone(), 1));
            }
        }
    }
    Ok(index.score_position(&terms, position))
}

/// Appends concepts to facts as a query block: facts, a `---` separator
/// line, then the concepts joined by `"; "`, that line repeated `repeat`
/// times. No concepts (or repeat 0) leaves the facts unchanged.
pub fn augment_query(facts: &str, concepts: &[String], repeat: usize) -> String {
    if concepts.is_empty() || repeat == 0 {
        return facts.to_string();
    }
    let block = concepts.join("; ");
    let mut out = String::with_capacity(facts.len() + 5 + (block.len() + 1) * repeat);
    out.push_str(facts);
    out.push_str("\n---");
    for _ in 0..repeat {
        out.push('\n');
        out.push_str(&block);
    }
    out
}

/// One ranked document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Ranking for one query: scores non-increasing, ties in pool order, ids
/// drawn from the pool without duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRun {
    pub query_id: String,
    pub ranking: Vec<ScoredDoc>,
}

impl RankedRun {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.ranking.iter().map(|s| s.doc_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }
}

fn rank_top_k(query_id: &str, mut scored: Vec<ScoredDoc>, k: usize) -> RankedRun {
    // Stable sort keeps pool order for equal scores.
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(k);
    RankedRun { query_id: query_id.to_string(), ranking: scored }
}

/// Scores every pool document lexically and returns the top k.
pub fn search_bm25(
    index: &Bm25Index,
    query_id: &str,
    query_text: &str,
    pool: &[String],
    k: usize,
) -> Result<RankedRun, RetrieveError> {
    let terms = query_terms(query_text);
    let mut scored = Vec::with_capacity(pool.len());
    for id in pool {
        let &position = index
            .doc_index
            .get(id)
            .ok_or_else(|| RetrieveError::UnknownDocument { id: id.clone() })?;
        scored
            .push(ScoredDoc { doc_id: id.clone(), score: index.score_position(&terms, position) });
    }
    Ok(rank_top_k(query_id, scored, k))
}

/// Exact exhaustive dense scoring: dot product between the query embedding
/// and each pool document's embedding. External-vector providers resolve
/// both sides by id key; fitted providers embed the text.
pub fn search_dense(
    provider: &dyn EmbeddingProvider,
    query_id: &str,
    query_text: &str,
    corpus: &Corpus,
    pool: &[String],
    k: usize,
) -> Result<RankedRun, RetrieveError> {
    let query_vec = provider.embed_document(query_id, query_text)?;
    let mut scored = Vec::with_capacity(pool.len());
    for id in pool {
        let doc =
            corpus.get(id).ok_or_else(|| RetrieveError::UnknownDocument { id: id.clone() })?;
        let doc_vec = provider.embed_document(&doc.id, &doc.facts)?;
        if doc_vec.dimension() != query_vec.dimension() {
            return Err(RetrieveError::Embed(EmbedError::DimensionMismatch {
                left: query_vec.dimension(),
                right: doc_vec.dimension(),
            }));
        }
        let score: f64 = query_vec.values().iter().zip(doc_vec.values()).map(|(a, b)| a * b).sum();
        scored.push(ScoredDoc { doc_id: id.clone(), score });
    }
    Ok(rank_top_k(query_id, scored, k))
}

/// Serializes the index: magic `PCRIDX`, version byte `1`, little-endian
/// k1/b, the document table, then term postings.
pub fn save_index(index: &Bm25Index, path: impl AsRef<Path>) -> Result<(), RetrieveError> {
    let path = path.as_ref();
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.push(INDEX_VERSION);
    out.write_f64::<LittleEndian>(index.params.k1).expect("vec write");
    out.write_f64::<LittleEndian>(index.params.b).expect("vec write");
    out.write_u64::<LittleEndian>(index.doc_ids.len() as u64).expect("vec write");
    for (id, &length) in index.doc_ids.iter().zip(&index.doc_lengths) {
        out.write_u32::<LittleEndian>(id.len() as u32).expect("vec write");
        out.extend_from_slice(id.as_bytes());
        out.write_u32::<LittleEndian>(length).expect("vec write");
    }
    out.write_u64::<LittleEndian>(index.postings.len() as u64).expect("vec write");
    for (term, list) in &index.postings {
        out.write_u32::<LittleEndian>(term.len() as u32).expect("vec write");
        out.extend_from_slice(term.as_bytes());
        out.write_u32::<LittleEndian>(list.len() as u32).expect("vec write");
        for &(doc, tf) in list {
            out.write_u32::<LittleEndian>(doc).expect("vec write");
            out.write_u32::<LittleEndian>(tf).expect("vec write");
        }
    }
    fs::write(path, out).map_err(|source| RetrieveError::Io { path: path.to_path_buf(), source })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt<T>(&self, reason: impl Into<String>) -> Result<T, RetrieveError> {
        Err(RetrieveError::Corrupt { offset: self.pos, reason: reason.into() })
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], RetrieveError> {
        if self.buf.len() - self.pos < n {
            return self.corrupt("unexpected end of file");
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, RetrieveError> {
        Ok(LittleEndian::read_u32(self.bytes(4)?))
    }

    fn u64(&mut self) -> Result<u64, RetrieveError> {
        Ok(LittleEndian::read_u64(self.bytes(8)?))
    }

    fn f64(&mut self) -> Result<f64, RetrieveError> {
        Ok(LittleEndian::read_f64(self.bytes(8)?))
    }

    fn string(&mut self) -> Result<String, RetrieveError> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let bytes = self.bytes(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| RetrieveError::Corrupt {
            offset: start,
            reason: "string is not valid UTF-8".to_string(),
        })
    }

    /// Guards length-prefixed allocations against absurd claims.
    fn check_count(&self, count: u64, min_record_bytes: usize) -> Result<usize, RetrieveError> {
        let remaining = (self.buf.len() - self.pos) as u64;
        if count.saturating_mul(min_record_bytes as u64) > remaining {
            return self.corrupt(format!("count {count} exceeds file size"));
        }
        Ok(count as usize)
    }
}

/// Loads an index written by [`save_index`]. Wrong magic, an unsupported
/// version byte, truncation, trailing bytes, and inconsistent tables are
/// all rejected; corruption errors carry the byte offset.
pub fn load_index(path: impl AsRef<Path>) -> Result<Bm25Index, RetrieveError> {
    let buf = fs::read(path.as_ref())
        .map_err(|source| RetrieveError::Io { path: path.as_ref().to_path_buf(), source })?;
    let mut r = Reader { buf: &buf, pos: 0 };

    let magic = r.bytes(INDEX_MAGIC.len())?;
    if magic != INDEX_MAGIC {
        return Err(RetrieveError::BadMagic);
    }
    let version = r.bytes(1)?[0];
    if version != INDEX_VERSION {
        return Err(RetrieveError::VersionMismatch { found: version });
    }

    let k1 = r.f64()?;
    let b = r.f64()?;
    let params = Bm25Params { k1, b }
        .validate()
        .map_err(|e| RetrieveError::Corrupt { offset: 7, reason: e.to_string() })?;

    let n_docs = r.u64()?;
    let n_docs = r.check_count(n_docs, 8)?;
    let mut doc_ids = Vec::with_capacity(n_docs);
    let mut doc_lengths = Vec::with_capacity(n_docs);
    let mut seen_ids = HashMap::new();
    for _ in 0..n_docs {
        let at = r.pos;
        let id = r.string()?;
        if id.is_empty() || seen_ids.insert(id.clone(), ()).is_some() {
            return Err(RetrieveError::Corrupt {
                offset: at,
                reason: format!("empty or duplicate document id {id:?}"),
            });
        }
        doc_ids.push(id);
        doc_lengths.push(r.u32()?);
    }

    let n_terms = r.u64()?;
    let n_terms = r.check_count(n_terms, 8)?;
    let mut postings = BTreeMap::new();
    let mut previous_term: Option<String> = None;
    for _ in 0..n_terms {
        let term_at = r.pos;
        let term = r.string()?;
        if previous_term.as_ref().is_some_and(|p| p >= &term) {
            return Err(RetrieveError::Corrupt {
                offset: term_at,
                reason: format!("terms not strictly ascending at {term:?}"),
            });
        }
        let count = r.u32()?;
        let count = r.check_count(count as u64, 8)?;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let at = r.pos;
            let doc = r.u32()?;
            let tf = r.u32()?;
            let ascending = list.last().is_none_or(|&(d, _)| d < doc);
            if doc as usize >= n_docs || tf == 0 || !ascending {
                return Err(RetrieveError::Corrupt {
                    offset: at,
                    reason: "bad posting entry".to_string(),
                });
            }
            list.push((doc, tf));
        }
        previous_term = Some(term.clone());
        postings.insert(term, list);
    }

    if r.pos != buf.len() {
        return Err(RetrieveError::Corrupt {
            offset: r.pos,
            reason: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    finish_index(params, doc_ids, doc_lengths, postings)
}
