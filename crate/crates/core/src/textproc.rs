//! Tokenization, lexicon+suffix part-of-speech tagging, noun-phrase
//! chunking, paragraph splitting, and citation-marker location.
//!
//! Tokens are maximal runs of Unicode letters/digits (internal hyphens and
//! apostrophes join), lowercased; `[[CITE:<id>]]` markers become single
//! tokens with their original case. Noun phrases are maximal left-to-right
//! matches of the tag pattern `<NN.*|JJ>*<NN.*>`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;

/// Tag assigned to `[[CITE:...]]` marker tokens.
pub const CITE_TAG: &str = "CITE";

const CITE_PREFIX: &str = "[[CITE:";
const CITE_SUFFIX: &str = "]]";

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("cannot read lexicon {path}: {source}")]
    LexiconIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon {path} line {line}: {reason}")]
    LexiconParse { path: PathBuf, line: usize, reason: String },
    #[error("duplicate lexicon entry for {word:?}")]
    DuplicateEntry { word: String },
    #[error("malformed citation marker {text:?} at bytes {start}..{end}")]
    MalformedMarker { text: String, start: usize, end: usize },
}

/// A single token. `tag` is `None` until a tagger runs. `span` is the byte
/// range of the token in its source text; `text` is that slice lowercased
/// (verbatim for citation markers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub tag: Option<String>,
    pub index: usize,
    pub span: (usize, usize),
}

impl Token {
    pub fn is_citation_marker(&self) -> bool {
        self.text.starts_with(CITE_PREFIX)
    }

    pub fn tag_str(&self) -> &str {
        self.tag.as_deref().unwrap_or("")
    }
}

/// A non-blank block of a document. `span` is the byte range of the trimmed
/// text in the parent document, so `text == source[span.0..span.1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    pub span: (usize, usize),
}

/// One `[[CITE:<target_id>]]` occurrence in a token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationMarker {
    pub target_id: String,
    /// The marker token's `index` field.
    pub token_index: usize,
    /// Byte span of the marker in the source text.
    pub span: (usize, usize),
}

/// A chunked noun phrase. `tokens` gives positions into the token list the
/// chunker was called with, end exclusive; `span` is the byte range from the
/// first to the last covered token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseSpan {
    pub text: String,
    pub tokens: (usize, usize),
    pub span: (usize, usize),
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // \p{M} keeps combining marks inside a run so that lowercasing,
        // which can expand a letter into letter+mark, stays idempotent.
        Regex::new(
            r"\[\[CITE:[^\s\]]+\]\]|[\p{L}\p{N}][\p{L}\p{N}\p{M}]*(?:['’‐‑-][\p{L}\p{N}][\p{L}\p{N}\p{M}]*)*",
        )
        .expect("token pattern compiles")
    })
}

/// Splits text into word and citation-marker tokens. Deterministic; empty
/// input yields an empty list.
pub fn tokenize(text: &str) -> Vec<Token> {
    token_regex()
        .find_iter(text)
        .enumerate()
        .map(|(index, m)| {
            let raw = m.as_str();
            let text =
                if raw.starts_with(CITE_PREFIX) { raw.to_string() } else { raw.to_lowercase() };
            Token { text, tag: None, index, span: (m.start(), m.end()) }
        })
        .collect()
}

/// Word → Penn-style tag map. File format: one `word<TAB>TAG` per line,
/// `#` starts a comment line, blank lines ignored.
#[derive(Debug, Clone, Default)]
pub struct TagLexicon {
    tags: HashMap<String, String>,
}

impl TagLexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let path = path.as_ref();
        let content = fs::read_to_string(path)
            .map_err(|source| TextError::LexiconIo { path: path.to_path_buf(), source })?;
        Self::parse(path, &content)
    }

    fn parse(path: &Path, content: &str) -> Result<Self, TextError> {
        let mut lexicon = Self::default();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| TextError::LexiconParse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (word, tag) =
                line.split_once('\t').ok_or_else(|| err("expected word<TAB>TAG".to_string()))?;
            if word.is_empty() || tag.is_empty() {
                return Err(err("empty word or tag".to_string()));
            }
            lexicon.insert(word, tag).map_err(|_| err(format!("duplicate entry for {word:?}")))?;
        }
        Ok(lexicon)
    }

    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, TextError> {
        let mut lexicon = Self::default();
        for (word, tag) in entries {
            lexicon.insert(word, tag)?;
        }
        Ok(lexicon)
    }

    fn insert(&mut self, word: &str, tag: &str) -> Result<(), TextError> {
        if self.tags.insert(word.to_lowercase(), tag.to_string()).is_some() {
            return Err(TextError::DuplicateEntry { word: word.to_string() });
        }
        Ok(())
    }

    /// The built-in English legal-domain lexicon.
    pub fn bundled() -> &'static TagLexicon {
        static LEX: OnceLock<TagLexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            Self::parse(Path::new("<bundled>"), include_str!("../data/english-legal.lex"))
                .expect("bundled lexicon is well-formed")
        })
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.tags.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Assigns exactly one tag per token: citation markers get `CITE`, then
/// exact lexicon lookup, then suffix rules, then the `NN` default.
pub fn pos_tag(tokens: Vec<Token>, lexicon: &TagLexicon) -> Vec<Token> {
    tokens
        .into_iter()
        .map(|mut t| {
            t.tag = Some(tag_word(&t.text, lexicon));
            t
        })
        .collect()
}

fn tag_word(word: &str, lexicon: &TagLexicon) -> String {
    if word.starts_with(CITE_PREFIX) {
        return CITE_TAG.to_string();
    }
    if let Some(tag) = lexicon.get(word) {
        return tag.to_string();
    }
    if let Some(stem) = word.strip_suffix('s') {
        if lexicon.get(stem) == Some("NN") {
            return "NNS".to_string();
        }
    }
    // Suffix rules need at least two stem characters before the suffix so
    // bare suffix-like words ("able", "ion") fall through to the default.
    let has_suffix = |suffix: &str| word.len() >= suffix.len() + 2 && word.ends_with(suffix);
    if ["tion", "ment", "ness", "ity"].iter().any(|s| has_suffix(s)) {
        return "NN".to_string();
    }
    if ["al", "ive", "ous", "able"].iter().any(|s| has_suffix(s)) {
        return "JJ".to_string();
    }
    if has_suffix("ly") {
        return "RB".to_string();
    }
    "NN".to_string()
}

/// Anything that can tag a token stream. Lets pre-tagged corpora bypass the
/// lexicon tagger.
pub trait Tagger {
    fn tag(&self, tokens: Vec<Token>) -> Vec<Token>;
}

/// [`Tagger`] backed by [`pos_tag`] over a [`TagLexicon`].
#[derive(Debug, Clone, Copy)]
pub struct LexiconTagger<'a> {
    lexicon: &'a TagLexicon,
}

impl<'a> LexiconTagger<'a> {
    pub fn new(lexicon: &'a TagLexicon) -> Self {
        Self { lexicon }
    }
}

impl Tagger for LexiconTagger<'_> {
    fn tag(&self, tokens: Vec<Token>) -> Vec<Token> {
        pos_tag(tokens, self.lexicon)
    }
}

fn is_noun_tag(tag: &str) -> bool {
    tag.starts_with("NN")
}

fn in_phrase_pattern(tag: &str) -> bool {
    is_noun_tag(tag) || tag == "JJ"
}

/// Maximal non-overlapping left-to-right matches of `<NN.*|JJ>*<NN.*>`,
/// greedy longest-match. Untagged tokens never join a phrase.
pub fn chunk_noun_phrases(tagged: &[Token]) -> Vec<PhraseSpan> {
    let mut phrases = Vec::new();
    let mut i = 0;
    while i < tagged.len() {
        if !in_phrase_pattern(tagged[i].tag_str()) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut last_noun = None;
        while i < tagged.len() && in_phrase_pattern(tagged[i].tag_str()) {
            if is_noun_tag(tagged[i].tag_str()) {
                last_noun = Some(i);
            }
            i += 1;
        }
        // The greedy match from run_start extends exactly to the last NN.*
        // in the run; trailing JJ tokens cannot start a new match.
        if let Some(end) = last_noun {
            let covered = &tagged[run_start..=end];
            phrases.push(PhraseSpan {
                text: covered.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
                tokens: (run_start, end + 1),
                span: (covered[0].span.0, covered[covered.len() - 1].span.1),
            });
        }
    }
    phrases
}

/// Splits on runs of blank lines, trims each block, and drops empties.
/// Paragraph spans index into the source text.
pub fn split_paragraphs(text: &str) -> Vec<Paragraph> {
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut cursor = 0;
    for line in text.split_inclusive('\n') {
        let start = cursor;
        cursor += line.len();
        let content = line.trim_end_matches('\n').trim_end_matches('\r');
        if content.trim().is_empty() {
            if let Some(block) = current.take() {
                blocks.push(block);
            }
        } else {
            let end = start + content.len();
            match &mut current {
                Some((_, e)) => *e = end,
                None => current = Some((start, end)),
            }
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }

    blocks
        .into_iter()
        .map(|(start, end)| {
            let raw = &text[start..end];
            let lead = raw.len() - raw.trim_start().len();
            let trail = raw.len() - raw.trim_end().len();
            (start + lead, end - trail)
        })
        .filter(|(start, end)| start < end)
        .enumerate()
        .map(|(index, (start, end))| Paragraph {
            index,
            text: text[start..end].to_string(),
            span: (start, end),
        })
        .collect()
}

/// One marker per `[[CITE:...]]` token, in token order. Tokens that start
/// like a marker but do not parse (possible with hand-built tokens) are an
/// error naming the span.
pub fn locate_citation_markers(tokens: &[Token]) -> Result<Vec<CitationMarker>, TextError> {
    let mut markers = Vec::new();
    for t in tokens {
        if !t.text.starts_with(CITE_PREFIX) {
            continue;
        }
        let target =
            t.text.strip_prefix(CITE_PREFIX).and_then(|s| s.strip_suffix(CITE_SUFFIX)).filter(
                |id| !id.is_empty() && !id.contains(|c: char| c.is_whitespace() || c == ']'),
            );
        match target {
            Some(id) => markers.push(CitationMarker {
                target_id: id.to_string(),
                token_index: t.index,
                span: t.span,
            }),
            None => {
                return Err(TextError::MalformedMarker {
                    text: t.text.clone(),
                    start: t.span.0,
                    end: t.span.1,
                })
            }
        }
    }
    Ok(markers)
}
