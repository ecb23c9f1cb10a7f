//! Concept-augmented prior-case retrieval.
//!
//! The pipeline: ingest a corpus of cases split into facts and reasoning
//! ([`corpus`]), mine noun-phrase concept candidates from reasoning
//! ([`textproc`]), score them by masked-paragraph relevance and citation
//! proximity, select a diverse high-quality subset with determinantal point
//! process greedy MAP ([`concepts`], [`dpp`]), augment fact-only queries with
//! the selected concepts, rank chronologically valid candidates with BM25 or
//! dense dot products ([`retrieve`]), and report Recall@k / MAP ([`eval`]).
//!
//! [`synthetic`] generates a planted corpus where relevance is mediated by
//! shared noun phrases, used by the test suite and the bundled fixtures.

pub mod concepts;
pub mod corpus;
pub mod dpp;
pub mod embed;
pub mod eval;
pub mod retrieve;
pub mod synthetic;
pub mod textproc;

pub use concepts::{
    CandidateConcept, ConceptError, ConceptExtractor, ConceptSelection, ConceptStore,
    ExtractionConfig,
};
pub use corpus::{load_corpus, save_corpus, CitationMarker, Corpus, CorpusError, Document};
pub use dpp::{greedy_map, DppError, DppKernel, GreedySelection};
pub use embed::{
    cosine, fit_tfidf, EmbedError, Embedding, EmbeddingProvider, ExternalVectors, FieldSelector,
    TfidfModel,
};
pub use eval::{ConceptSource, EvalError, EvalReport, ExperimentConfig, ExperimentReport};
pub use retrieve::{
    augment_query, build_index, load_index, save_index, search_bm25, search_dense, Bm25Index,
    Bm25Params, IndexField, RankedRun, RetrieveError, ScoredDoc,
};
pub use textproc::{
    chunk_noun_phrases, locate_citation_markers, pos_tag, split_paragraphs, tokenize,
    LexiconTagger, Paragraph, PhraseSpan, TagLexicon, Tagger, TextError, Token,
};
