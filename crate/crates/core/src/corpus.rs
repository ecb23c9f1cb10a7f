//! Case documents, corpus ingestion, chronological candidate pools, and
//! citation-derived relevance labels.
//!
//! The on-disk format is newline-delimited JSON with a
//! `{"format":"pcr-corpus","version":1}` header line followed by one record
//! per line with keys `id`, `date` (`YYYY-MM-DD`), `facts`, `reasoning`.
//! Citation markers inside `reasoning` are literal `[[CITE:<id>]]` tokens.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::textproc::{locate_citation_markers, tokenize, TextError};

pub const CORPUS_FORMAT: &str = "pcr-corpus";
pub const CORPUS_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} is empty; expected a {CORPUS_FORMAT} header line")]
    MissingHeader { path: PathBuf },
    #[error("unsupported corpus header (need format {CORPUS_FORMAT:?} version {CORPUS_VERSION}): {found}")]
    UnsupportedFormat { found: String },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate document id {id:?}")]
    DuplicateId { id: String },
    #[error("document id must be non-empty")]
    EmptyId,
    #[error("unknown document id {id:?}")]
    UnknownDocument { id: String },
    #[error(transparent)]
    Text(#[from] TextError),
}

/// A case. `facts` is the only part visible at query time; `reasoning`
/// carries the court's argumentation and `[[CITE:<id>]]` markers naming the
/// cases it relies on. `reasoning` may be empty for query-only documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub date: NaiveDate,
    pub facts: String,
    pub reasoning: String,
}

impl Document {
    /// Citation markers parsed from the tokenized reasoning, in token order.
    pub fn citation_markers(&self) -> Result<Vec<CitationMarker>, TextError> {
        locate_citation_markers(&tokenize(&self.reasoning))
    }
}

pub use crate::textproc::CitationMarker;

/// Id-keyed document collection iterating in (date, id) order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from in-memory documents, sorting them into the
    /// canonical (date, id) iteration order.
    pub fn from_documents(mut docs: Vec<Document>) -> Result<Self, CorpusError> {
        docs.sort_by(|a, b| (a.date, a.id.as_str()).cmp(&(b.date, b.id.as_str())));
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(CorpusError::EmptyId);
            }
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { id: doc.id.clone() });
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn require(&self, id: &str) -> Result<&Document, CorpusError> {
        self.get(id).ok_or_else(|| CorpusError::UnknownDocument { id: id.to_string() })
    }

    /// Documents in (date, id) order.
    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    /// Ids of documents dated strictly before the query, in (date, id)
    /// order. Same-day documents are excluded: a decision cannot rely on a
    /// case that was not yet decided when it was written.
    pub fn candidate_pool(&self, query_id: &str) -> Result<Vec<String>, CorpusError> {
        let query = self.require(query_id)?;
        Ok(self.docs.iter().filter(|d| d.date < query.date).map(|d| d.id.clone()).collect())
    }

    /// Distinct citation targets in the query's reasoning, intersected with
    /// its candidate pool. Out-of-corpus and anachronistic citations drop
    /// out, keeping Recall well-defined over the pool.
    pub fn relevance_labels(&self, query_id: &str) -> Result<BTreeSet<String>, CorpusError> {
        let query = self.require(query_id)?;
        let mut labels = BTreeSet::new();
        for marker in query.citation_markers()? {
            if let Some(target) = self.get(&marker.target_id) {
                if target.date < query.date {
                    labels.insert(marker.target_id);
                }
            }
        }
        Ok(labels)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    date: String,
    facts: String,
    reasoning: String,
}

/// Loads a corpus file, validating the header, record schema, strict
/// `YYYY-MM-DD` dates, and id uniqueness. Record errors carry the 1-based
/// line number.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(io_err)?;
    let mut lines = BufReader::new(file).lines();

    let header = match lines.next() {
        None => return Err(CorpusError::MissingHeader { path: path.to_path_buf() }),
        Some(line) => line.map_err(io_err)?,
    };
    let parsed: Option<Header> = serde_json::from_str(&header).ok();
    match parsed {
        Some(h) if h.format == CORPUS_FORMAT && h.version == CORPUS_VERSION => {}
        _ => return Err(CorpusError::UnsupportedFormat { found: header }),
    }

    let mut docs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let malformed = |reason: String| CorpusError::MalformedRecord { line: line_no, reason };
        let line = line.map_err(io_err)?;
        let record: RawRecord =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if record.id.is_empty() {
            return Err(malformed("empty document id".to_string()));
        }
        let date = parse_date(&record.date).map_err(malformed)?;
        docs.push(Document {
            id: record.id,
            date,
            facts: record.facts,
            reasoning: record.reasoning,
        });
    }
    match Corpus::from_documents(docs) {
        // from_documents reports duplicates without line context; ids were
        // already validated non-empty above.
        Err(CorpusError::EmptyId) => unreachable!("ids validated per line"),
        other => other,
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    let date =
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))?;
    // Re-rendering pins zero padding, so "1999-1-01" is rejected.
    if date.format("%Y-%m-%d").to_string() != s {
        return Err(format!("bad date {s:?}: expected YYYY-MM-DD"));
    }
    Ok(date)
}

/// Writes the corpus in the versioned NDJSON format, records in (date, id)
/// order. `load_corpus(save_corpus(c))` preserves every field.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let header = Header { format: CORPUS_FORMAT.to_string(), version: CORPUS_VERSION };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))
        .map_err(io_err)?;
    for doc in corpus.iter() {
        let record = RawRecord {
            id: doc.id.clone(),
            date: doc.date.format("%Y-%m-%d").to_string(),
            facts: doc.facts.clone(),
            reasoning: doc.reasoning.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("record serializes"))
            .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
