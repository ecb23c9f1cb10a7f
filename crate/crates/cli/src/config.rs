//! Sectioned TOML run configuration. Every section has defaults, so a
//! minimal config only names the corpus; unknown keys are rejected to
//! catch typos.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use pcr_core::eval::{ConceptSource, ExperimentConfig, RetrieverKind};
use pcr_core::{Bm25Params, ExtractionConfig, IndexField};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: CorpusSection,
    pub retriever: RetrieverSection,
    pub embed: EmbedSection,
    pub concepts: ConceptsSection,
    pub eval: EvalSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverSection {
    /// "bm25" or "dense".
    pub kind: String,
    /// "facts" or "facts+concepts" (index-side augmentation).
    pub field: String,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrieverSection {
    fn default() -> Self {
        Self { kind: "bm25".into(), field: "facts".into(), k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    /// "tfidf" or "external".
    pub kind: String,
    pub vectors: Option<PathBuf>,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self { kind: "tfidf".into(), vectors: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptsSection {
    pub budget: usize,
    pub stop_on_nonpositive_gain: bool,
    pub max_phrase_tokens: usize,
    /// Imported concepts for the "+concepts" rows and for index-side
    /// augmentation.
    pub file: Option<PathBuf>,
    /// Times the concept block is appended to each query.
    pub repeat: usize,
    /// Donor concepts sampled per query in the noise row.
    pub noise_count: usize,
}

impl Default for ConceptsSection {
    fn default() -> Self {
        let d = ExtractionConfig::default();
        Self {
            budget: d.budget,
            stop_on_nonpositive_gain: d.stop_on_nonpositive_gain,
            max_phrase_tokens: d.max_phrase_tokens,
            file: None,
            repeat: 1,
            noise_count: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k_set: Vec<usize>,
    /// Row names: "baseline", "concepts", "noise", "oracle".
    pub rows: Vec<String>,
    /// Inclusive chronological bounds on the query slice, "YYYY-MM-DD".
    pub start: Option<String>,
    pub end: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k_set: vec![50, 100, 500, 1000],
            rows: vec!["baseline".into(), "oracle".into()],
            start: None,
            end: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 0, out_dir: PathBuf::from("out") }
    }
}

/// Maps a row name to its concept source. Accepts both the short config
/// names and the report row labels.
pub fn parse_source(name: &str) -> Option<ConceptSource> {
    match name {
        "baseline" | "none" => Some(ConceptSource::None),
        "concepts" | "+concepts" | "file" => Some(ConceptSource::ImportedFile),
        "noise" | "+concepts+noise" | "file+noise" => Some(ConceptSource::ImportedPlusNoise),
        "oracle" | "+oracle" => Some(ConceptSource::ExtractedOracle),
        _ => None,
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    /// The corpus path, validated to exist.
    pub fn corpus_path(&self) -> Result<&Path, String> {
        let path = self.corpus.path.as_deref().ok_or("config is missing corpus.path")?;
        if !path.exists() {
            return Err(format!("corpus path {} does not exist", path.display()));
        }
        Ok(path)
    }

    pub fn retriever_kind(&self) -> Result<RetrieverKind, String> {
        match self.retriever.kind.as_str() {
            "bm25" => Ok(RetrieverKind::Bm25),
            "dense" => Ok(RetrieverKind::Dense),
            other => Err(format!("unknown retriever.kind {other:?} (expected bm25 or dense)")),
        }
    }

    pub fn index_field(&self) -> Result<IndexField, String> {
        match self.retriever.field.as_str() {
            "facts" => Ok(IndexField::Facts),
            "facts+concepts" => Ok(IndexField::FactsAndConcepts),
            other => {
                Err(format!("unknown retriever.field {other:?} (expected facts or facts+concepts)"))
            }
        }
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params { k1: self.retriever.k1, b: self.retriever.b }
    }

    pub fn extraction(&self) -> ExtractionConfig {
        ExtractionConfig {
            budget: self.concepts.budget,
            stop_on_nonpositive_gain: self.concepts.stop_on_nonpositive_gain,
            max_phrase_tokens: self.concepts.max_phrase_tokens,
        }
    }

    /// The external vectors path when embed.kind = "external", validated.
    pub fn external_vectors(&self) -> Result<Option<&Path>, String> {
        match self.embed.kind.as_str() {
            "tfidf" => Ok(None),
            "external" => {
                let path = self
                    .embed
                    .vectors
                    .as_deref()
                    .ok_or("embed.kind = \"external\" needs embed.vectors")?;
                if !path.exists() {
                    return Err(format!("vectors path {} does not exist", path.display()));
                }
                Ok(Some(path))
            }
            other => Err(format!("unknown embed.kind {other:?} (expected tfidf or external)")),
        }
    }

    fn parse_date(value: &str, key: &str) -> Result<NaiveDate, String> {
        value.parse().map_err(|e| format!("bad {key} date {value:?}: {e}"))
    }

    /// Assembles the experiment manifest. `seed` already carries any
    /// command-line override; `row_filter` restricts the report to one row.
    pub fn experiment(
        &self,
        seed: u64,
        row_filter: Option<&str>,
    ) -> Result<ExperimentConfig, String> {
        let rows = match row_filter {
            Some(name) => vec![parse_source(name).ok_or(format!(
                "unknown row {name:?} (expected baseline, concepts, noise, or oracle)"
            ))?],
            None => self
                .eval
                .rows
                .iter()
                .map(|name| {
                    parse_source(name).ok_or(format!(
                        "unknown eval.rows entry {name:?} (expected baseline, concepts, noise, or oracle)"
                    ))
                })
                .collect::<Result<_, _>>()?,
        };
        let eval_start =
            self.eval.start.as_deref().map(|s| Self::parse_date(s, "eval.start")).transpose()?;
        let eval_end =
            self.eval.end.as_deref().map(|s| Self::parse_date(s, "eval.end")).transpose()?;
        Ok(ExperimentConfig {
            retriever: self.retriever_kind()?,
            rows,
            k_set: self.eval.k_set.clone(),
            extraction: self.extraction(),
            repeat: self.concepts.repeat,
            noise_count: self.concepts.noise_count,
            seed,
            bm25: self.bm25_params(),
            concept_file: self.concepts.file.clone(),
            vectors_file: self.external_vectors()?.map(Path::to_path_buf),
            eval_start,
            eval_end,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: FileConfig = toml::from_str("[corpus]\npath = \"x.jsonl\"\n").unwrap();
        assert_eq!(cfg.retriever.kind, "bm25");
        assert_eq!(cfg.retriever.k1, 1.2);
        assert_eq!(cfg.retriever.b, 0.75);
        assert_eq!(cfg.eval.k_set, [50, 100, 500, 1000]);
        assert_eq!(cfg.run.seed, 0);
        assert!(cfg.extraction().stop_on_nonpositive_gain);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[corpus]\npth = \"x\"\n").is_err());
        assert!(toml::from_str::<FileConfig>("[retreiver]\nkind = \"bm25\"\n").is_err());
    }

    #[test]
    fn row_names_parse_both_forms() {
        assert_eq!(parse_source("baseline"), Some(ConceptSource::None));
        assert_eq!(parse_source("oracle"), Some(ConceptSource::ExtractedOracle));
        assert_eq!(parse_source("+concepts"), Some(ConceptSource::ImportedFile));
        assert_eq!(parse_source("noise"), Some(ConceptSource::ImportedPlusNoise));
        assert_eq!(parse_source("nonsense"), None);
    }

    #[test]
    fn experiment_assembly_validates_names_and_dates() {
        let cfg: FileConfig = toml::from_str(
            "[corpus]\npath = \"x.jsonl\"\n[eval]\nrows = [\"baseline\", \"oracle\"]\nstart = \"2018-01-01\"\n",
        )
        .unwrap();
        let experiment = cfg.experiment(9, None).unwrap();
        assert_eq!(experiment.seed, 9);
        assert_eq!(experiment.rows.len(), 2);
        assert_eq!(experiment.eval_start, Some("2018-01-01".parse().unwrap()));

        let single = cfg.experiment(9, Some("oracle")).unwrap();
        assert_eq!(single.rows, [ConceptSource::ExtractedOracle]);

        assert!(cfg.experiment(9, Some("bogus")).is_err());

        let bad: FileConfig =
            toml::from_str("[corpus]\npath = \"x\"\n[eval]\nstart = \"2018-13-01\"\n").unwrap();
        assert!(bad.experiment(0, None).is_err());
    }
}
