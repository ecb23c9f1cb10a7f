//! Weak-supervision key-concept extraction: noun-phrase candidate mining
//! from reasoning paragraphs, masked-paragraph relevance, citation-proximity
//! regularization, DPP-based selection, and noisy-concept sampling.
//!
//! Relevance r-hat of a candidate is 1 minus the cosine between its source
//! paragraph and that paragraph with the candidate's tokens deleted;
//! proximity weight rho is a softmax over exp(1/k) where k is the token
//! distance to the nearest citation marker. Quality q = r-hat * rho feeds
//! the DPP kernel together with pairwise embedding cosines.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::dpp::{greedy_map, DppError, DppKernel};
use crate::embed::{cosine, EmbedError, Embedding, EmbeddingProvider};
use crate::textproc::{
    chunk_noun_phrases, locate_citation_markers, split_paragraphs, tokenize, CitationMarker,
    Paragraph, Tagger, TextError,
};

/// Quality floor: the relevance-proximity product can reach 0, but DPP
/// quality must stay positive.
const QUALITY_FLOOR: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ConceptError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Dpp(#[from] DppError),
    #[error("concept {concept:?} does not occur in paragraph {paragraph}")]
    ConceptNotInParagraph { concept: String, paragraph: usize },
    #[error("no document other than {query_id:?} has concepts to sample from")]
    NoDonorConcepts { query_id: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("concept file line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

/// One occurrence of a candidate phrase. `start..end` are token positions
/// inside the paragraph's own token list; `doc_start..doc_end` are the same
/// positions shifted into the whole-reasoning token stream (paragraph
/// tokens concatenate to exactly the document tokens).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occurrence {
    pub paragraph: usize,
    pub start: usize,
    pub end: usize,
    pub doc_start: usize,
    pub doc_end: usize,
}

/// A mined candidate phrase. Relevance fields are `None` until
/// `score_quality` runs; `citation_distance` stays `None` in documents
/// without citation markers (uniform fallback).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateConcept {
    /// Lowercased, single-space-joined token text.
    pub text: String,
    pub occurrences: Vec<Occurrence>,
    /// r-hat: max masked-paragraph relevance over occurrence paragraphs.
    pub raw_relevance: Option<f64>,
    /// k: token distance to the nearest citation marker, floored at 1.
    pub citation_distance: Option<usize>,
    /// rho: softmax share over exp(1/k); sums to 1 across a document.
    pub regularizer: Option<f64>,
    /// q = max(r-hat * rho, 1e-6).
    pub quality: Option<f64>,
}

/// Ordered DPP selection for one document. `concepts`, `qualities`, and
/// `gains` are parallel, in greedy pick order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSelection {
    pub document_id: String,
    pub concepts: Vec<String>,
    pub qualities: Vec<f64>,
    pub gains: Vec<f64>,
}

impl ConceptSelection {
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

/// Extraction knobs. Note the interaction of the defaults: quality is a
/// softmax share times a relevance in [0,1], so every singleton gain
/// 2*ln(q) is nonpositive and the default early stop selects nothing.
/// Disable `stop_on_nonpositive_gain` (or rescale qualities upstream) to
/// fill the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    /// Maximum selected concepts per document.
    pub budget: usize,
    /// Stop as soon as the best marginal log-det gain is <= 0.
    pub stop_on_nonpositive_gain: bool,
    /// Candidates longer than this many tokens are discarded.
    pub max_phrase_tokens: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self { budget: 15, stop_on_nonpositive_gain: true, max_phrase_tokens: 8 }
    }
}

/// Pipeline driver tying a tagger, an embedding provider, and the config
/// together. Immutable; documents can be processed in parallel.
pub struct ConceptExtractor<'a> {
    provider: &'a dyn EmbeddingProvider,
    tagger: &'a dyn Tagger,
    config: ExtractionConfig,
}

impl<'a> ConceptExtractor<'a> {
    pub fn new(
        provider: &'a dyn EmbeddingProvider,
        tagger: &'a dyn Tagger,
        config: ExtractionConfig,
    ) -> Self {
        Self { provider, tagger, config }
    }

    pub fn config(&self) -> &ExtractionConfig {
        &self.config
    }

    /// Mines noun-phrase candidates from every reasoning paragraph,
    /// deduplicated by normalized text in first-appearance order. Empty
    /// reasoning yields an empty list.
    pub fn extract_candidates(&self, doc: &Document) -> Vec<CandidateConcept> {
        let mut by_text: HashMap<String, usize> = HashMap::new();
        let mut candidates: Vec<CandidateConcept> = Vec::new();
        let mut doc_token_base = 0;
        for paragraph in split_paragraphs(&doc.reasoning) {
            let tokens = tokenize(&paragraph.text);
            let token_count = tokens.len();
            let tagged = self.tagger.tag(tokens);
            for phrase in chunk_noun_phrases(&tagged) {
                let (start, end) = phrase.tokens;
                if end - start > self.config.max_phrase_tokens {
                    continue;
                }
                let occurrence = Occurrence {
                    paragraph: paragraph.index,
                    start,
                    end,
                    doc_start: doc_token_base + start,
                    doc_end: doc_token_base + end,
                };
                match by_text.get(&phrase.text) {
                    Some(&i) => candidates[i].occurrences.push(occurrence),
                    None => {
                        by_text.insert(phrase.text.clone(), candidates.len());
                        candidates.push(CandidateConcept {
                            text: phrase.text,
                            occurrences: vec![occurrence],
                            raw_relevance: None,
                            citation_distance: None,
                            regularizer: None,
                            quality: None,
                        });
                    }
                }
            }
            doc_token_base += token_count;
        }
        candidates
    }

    /// r-hat for one paragraph: 1 - cosine(embed(paragraph with every
    /// occurrence of the concept's token sequence deleted), embed(paragraph)).
    pub fn masked_relevance(
        &self,
        paragraph: &Paragraph,
        concept_text: &str,
    ) -> Result<f64, ConceptError> {
        let tokens = tokenize(&paragraph.text);
        let needle: Vec<&str> = concept_text.split_whitespace().collect();
        let matches = find_token_matches(&tokens, &needle);
        if matches.is_empty() {
            return Err(ConceptError::ConceptNotInParagraph {
                concept: concept_text.to_string(),
                paragraph: paragraph.index,
            });
        }
        let mut masked: Vec<&str> = Vec::with_capacity(tokens.len());
        let mut next = 0;
        for &(start, end) in &matches {
            masked.extend(tokens[next..start].iter().map(|t| t.text.as_str()));
            next = end;
        }
        masked.extend(tokens[next..].iter().map(|t| t.text.as_str()));

        let masked_vec = self.provider.embed_text(&masked.join(" "))?;
        let full_vec = self.provider.embed_text(&paragraph.text)?;
        Ok(1.0 - cosine(&masked_vec, &full_vec)?)
    }

    /// Fills r-hat, k, rho, and q on every candidate. `paragraphs` and
    /// `markers` must come from the same reasoning text the candidates were
    /// extracted from (markers in whole-reasoning token indices).
    pub fn score_quality(
        &self,
        candidates: &mut [CandidateConcept],
        paragraphs: &[Paragraph],
        markers: &[CitationMarker],
    ) -> Result<(), ConceptError> {
        for candidate in candidates.iter_mut() {
            let mut paragraph_ids: Vec<usize> =
                candidate.occurrences.iter().map(|o| o.paragraph).collect();
            paragraph_ids.sort_unstable();
            paragraph_ids.dedup();
            let mut best = 0.0f64;
            for p in paragraph_ids {
                let relevance = self.masked_relevance(&paragraphs[p], &candidate.text)?;
                best = best.max(relevance);
            }
            candidate.raw_relevance = Some(best);
            candidate.citation_distance =
                if markers.is_empty() { None } else { Some(citation_distance(candidate, markers)) };
        }
        let rho = position_regularizer(candidates, markers);
        for (candidate, rho) in candidates.iter_mut().zip(rho) {
            candidate.regularizer = Some(rho);
            let relevance = candidate.raw_relevance.expect("set above");
            candidate.quality = Some((relevance * rho).max(QUALITY_FLOOR));
        }
        Ok(())
    }

    /// Full pipeline for one document: mine, score, build the DPP kernel
    /// from quality and pairwise embedding cosines, and pick greedily.
    pub fn select_key_concepts(&self, doc: &Document) -> Result<ConceptSelection, ConceptError> {
        let mut candidates = self.extract_candidates(doc);
        let mut selection = ConceptSelection {
            document_id: doc.id.clone(),
            concepts: Vec::new(),
            qualities: Vec::new(),
            gains: Vec::new(),
        };
        if candidates.is_empty() {
            return Ok(selection);
        }
        let paragraphs = split_paragraphs(&doc.reasoning);
        let markers = locate_citation_markers(&tokenize(&doc.reasoning))?;
        self.score_quality(&mut candidates, &paragraphs, &markers)?;

        let embeddings: Vec<Embedding> = candidates
            .iter()
            .map(|c| self.provider.embed_text(&c.text))
            .collect::<Result<_, _>>()?;
        let n = candidates.len();
        let mut similarity = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let c = cosine(&embeddings[i], &embeddings[j])?;
                similarity[(i, j)] = c;
                similarity[(j, i)] = c;
            }
        }
        let quality: Vec<f64> = candidates.iter().map(|c| c.quality.expect("scored")).collect();
        let kernel = DppKernel::build(quality, similarity)?;
        let picked = greedy_map(&kernel, self.config.budget, self.config.stop_on_nonpositive_gain);

        for (&i, &gain) in picked.indices.iter().zip(&picked.gains) {
            selection.concepts.push(candidates[i].text.clone());
            selection.qualities.push(candidates[i].quality.expect("scored"));
            selection.gains.push(gain);
        }
        Ok(selection)
    }
}

/// Non-overlapping left-to-right matches of a token-text sequence.
fn find_token_matches(tokens: &[crate::textproc::Token], needle: &[&str]) -> Vec<(usize, usize)> {
    let mut matches = Vec::new();
    if needle.is_empty() || needle.len() > tokens.len() {
        return matches;
    }
    let mut i = 0;
    while i + needle.len() <= tokens.len() {
        if tokens[i..i + needle.len()].iter().zip(needle).all(|(t, n)| t.text == *n) {
            matches.push((i, i + needle.len()));
            i += needle.len();
        } else {
            i += 1;
        }
    }
    matches
}

fn citation_distance(candidate: &CandidateConcept, markers: &[CitationMarker]) -> usize {
    let mut best = usize::MAX;
    for occurrence in &candidate.occurrences {
        for marker in markers {
            let m = marker.token_index;
            let d = if m < occurrence.doc_start {
                occurrence.doc_start - m
            } else if m >= occurrence.doc_end {
                m - (occurrence.doc_end - 1)
            } else {
                // A marker inside a phrase span cannot arise from the
                // chunker (CITE never matches the pattern) but hand-built
                // occurrences get the adjacent distance.
                1
            };
            best = best.min(d);
        }
    }
    best.max(1)
}

/// rho vector over candidates: softmax of exp(1/k) against citation
/// markers, exactly uniform (1/n) when no markers exist. Candidates must
/// carry occurrences in the same token index space as the markers.
pub fn position_regularizer(
    candidates: &[CandidateConcept],
    markers: &[CitationMarker],
) -> Vec<f64> {
    let n = candidates.len();
    if n == 0 {
        return Vec::new();
    }
    if markers.is_empty() {
        return vec![1.0 / n as f64; n];
    }
    // Double exponential: inputs to the softmax are x = e^(1/k).
    let x: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let k = c.citation_distance.unwrap_or_else(|| citation_distance(c, markers));
            (1.0 / k as f64).exp()
        })
        .collect();
    let exps: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / total).collect()
}

/// Per-document concept lists, keyed by document id; the interchange
/// object between extraction, external concept generators, and retrieval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptStore {
    by_doc: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    id: String,
    concepts: Vec<String>,
}

impl ConceptStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, concepts: Vec<String>) {
        self.by_doc.insert(id.into(), concepts);
    }

    pub fn get(&self, id: &str) -> Option<&[String]> {
        self.by_doc.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_doc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_doc.is_empty()
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.by_doc.iter().map(|(id, c)| (id.as_str(), c.as_slice()))
    }

    /// Reads newline-delimited `{"id":...,"concepts":[...]}` records.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConceptError> {
        let path = path.as_ref();
        let content = fs::read_to_string(path)
            .map_err(|source| ConceptError::Io { path: path.to_path_buf(), source })?;
        let mut store = Self::new();
        for (i, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| ConceptError::MalformedLine { line: i + 1, reason };
            let parsed: StoreLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            match store.by_doc.entry(parsed.id) {
                Entry::Occupied(e) => {
                    return Err(err(format!("duplicate document id {:?}", e.key())))
                }
                Entry::Vacant(e) => {
                    e.insert(parsed.concepts);
                }
            }
        }
        Ok(store)
    }

    /// Writes records in ascending id order, one JSON object per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConceptError> {
        let path = path.as_ref();
        let mut out = String::new();
        for (id, concepts) in &self.by_doc {
            let line = StoreLine { id: id.clone(), concepts: concepts.clone() };
            out.push_str(&serde_json::to_string(&line).expect("store line serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| ConceptError::Io { path: path.to_path_buf(), source })
    }
}

/// Uniformly samples `count` concepts (with replacement) from every
/// document except the query, deterministically per seed. Donor pairs are
/// enumerated in ascending document-id order so the draw sequence is
/// platform-stable.
pub fn sample_noisy_concepts(
    store: &ConceptStore,
    query_id: &str,
    count: usize,
    seed: u64,
) -> Result<Vec<String>, ConceptError> {
    let donors: Vec<&str> = store
        .iter()
        .filter(|(id, _)| *id != query_id)
        .flat_map(|(_, concepts)| concepts.iter().map(String::as_str))
        .collect();
    if donors.is_empty() {
        return Err(ConceptError::NoDonorConcepts { query_id: query_id.to_string() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| donors[rng.gen_range(0..donors.len())].to_string()).collect())
}
