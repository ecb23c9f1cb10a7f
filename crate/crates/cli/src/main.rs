//! `pcr`: corpus-driven prior-case retrieval. Subcommands extract silver
//! concepts, build/persist the lexical index, rank candidate pools, and
//! run the evaluation table. Exit codes: 0 success, 2 usage or config
//! error, 3 data error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use pcr_core::embed::load_external_vectors;
use pcr_core::eval::{run_experiment, EvalError, RetrieverKind};
use pcr_core::retrieve::RetrieveError;
use pcr_core::{
    build_index, fit_tfidf, load_corpus, load_index, save_index, search_bm25, search_dense,
    Bm25Index, ConceptExtractor, ConceptStore, Corpus, EmbeddingProvider, FieldSelector,
    IndexField, LexiconTagger, TagLexicon,
};

#[derive(Parser)]
#[command(name = "pcr", version, about = "Concept-augmented prior-case retrieval")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "pcr.toml")]
    config: PathBuf,
    /// Override run.seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override run.out_dir from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract key concepts from every document that has reasoning.
    Extract,
    /// Build the retrieval index and save it to the output directory.
    Index,
    /// Rank a candidate pool for one query.
    Search(SearchArgs),
    /// Run the experiment rows and write text and JSON reports.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    query: QueryArg,
    /// Number of results to print.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QueryArg {
    /// Query by document id; the pool is every strictly earlier case.
    #[arg(long)]
    query_id: Option<String>,
    /// Free-text query; the pool is the whole corpus.
    #[arg(long)]
    query_text: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Report a single row: baseline, concepts, noise, or oracle.
    #[arg(long)]
    row: Option<String>,
}

enum CliError {
    Config(String),
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = FileConfig::load(&cli.config).map_err(CliError::Config)?;
    let seed = cli.seed.unwrap_or(cfg.run.seed);
    let out_dir = cli.out.unwrap_or_else(|| cfg.run.out_dir.clone());
    match cli.command {
        Command::Extract => cmd_extract(&cfg, &out_dir),
        Command::Index => cmd_index(&cfg, &out_dir),
        Command::Search(args) => cmd_search(&cfg, &out_dir, &args),
        Command::Evaluate(args) => cmd_evaluate(&cfg, &out_dir, seed, &args),
    }
}

fn load_configured_corpus(cfg: &FileConfig) -> Result<Corpus, CliError> {
    let path = cfg.corpus_path().map_err(CliError::Config)?;
    load_corpus(path).map_err(data_err)
}

fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))
}

fn cmd_extract(cfg: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let corpus = load_configured_corpus(cfg)?;
    let model = fit_tfidf(&corpus, FieldSelector::Both).map_err(data_err)?;
    let tagger = LexiconTagger::new(TagLexicon::bundled());
    let extractor = ConceptExtractor::new(&model, &tagger, cfg.extraction());
    let mut store = ConceptStore::new();
    for doc in corpus.iter() {
        if doc.reasoning.trim().is_empty() {
            eprintln!("warning: {}: no reasoning section, skipped", doc.id);
            continue;
        }
        let selection = extractor.select_key_concepts(doc).map_err(data_err)?;
        println!("{} {}", doc.id, selection.len());
        store.insert(&doc.id, selection.concepts);
    }
    ensure_out_dir(out_dir)?;
    let path = out_dir.join("concepts.jsonl");
    store.save(&path).map_err(data_err)?;
    eprintln!("wrote {} ({} documents)", path.display(), store.len());
    Ok(())
}

/// Index-side augmentation needs the imported concept store.
fn index_inputs(cfg: &FileConfig) -> Result<(IndexField, Option<ConceptStore>), CliError> {
    let field = cfg.index_field().map_err(CliError::Config)?;
    let store = match field {
        IndexField::Facts => None,
        IndexField::FactsAndConcepts => {
            let path = cfg.concepts.file.as_deref().ok_or_else(|| {
                CliError::Config("retriever.field = \"facts+concepts\" needs concepts.file".into())
            })?;
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "concepts file {} does not exist",
                    path.display()
                )));
            }
            Some(ConceptStore::load(path).map_err(data_err)?)
        }
    };
    Ok((field, store))
}

fn build_configured_index(cfg: &FileConfig, corpus: &Corpus) -> Result<Bm25Index, CliError> {
    let (field, store) = index_inputs(cfg)?;
    build_index(corpus, field, store.as_ref(), cfg.bm25_params()).map_err(|e| match e {
        RetrieveError::BadParams { .. } | RetrieveError::MissingConcepts => config_err(e),
        other => data_err(other),
    })
}

fn cmd_index(cfg: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let corpus = load_configured_corpus(cfg)?;
    let index = build_configured_index(cfg, &corpus)?;
    ensure_out_dir(out_dir)?;
    let path = out_dir.join("index.bin");
    save_index(&index, &path).map_err(data_err)?;
    println!(
        "indexed {} documents (avgdl {:.2}) into {}",
        index.n_docs(),
        index.avgdl(),
        path.display()
    );
    Ok(())
}

fn cmd_search(cfg: &FileConfig, out_dir: &Path, args: &SearchArgs) -> Result<(), CliError> {
    let corpus = load_configured_corpus(cfg)?;
    let (query_id, query_text, pool): (String, String, Vec<String>) =
        match (&args.query.query_id, &args.query.query_text) {
            (Some(id), None) => {
                let doc = corpus
                    .get(id)
                    .ok_or_else(|| CliError::Data(format!("unknown query id {id:?}")))?;
                let pool = corpus.candidate_pool(id).map_err(data_err)?;
                (id.clone(), doc.facts.clone(), pool)
            }
            (None, Some(text)) => {
                let pool = corpus.iter().map(|d| d.id.clone()).collect();
                ("query".to_string(), text.clone(), pool)
            }
            _ => unreachable!("clap enforces exactly one query flag"),
        };

    let run = match cfg.retriever_kind().map_err(CliError::Config)? {
        RetrieverKind::Bm25 => {
            let saved = out_dir.join("index.bin");
            let index = if saved.exists() {
                load_index(&saved).map_err(data_err)?
            } else {
                build_configured_index(cfg, &corpus)?
            };
            search_bm25(&index, &query_id, &query_text, &pool, args.k).map_err(data_err)?
        }
        RetrieverKind::Dense => {
            let external = match cfg.external_vectors().map_err(CliError::Config)? {
                Some(path) => {
                    if args.query.query_text.is_some() {
                        return Err(CliError::Config(
                            "external vectors are keyed by document id and cannot embed \
                             free text; use --query-id"
                                .into(),
                        ));
                    }
                    Some(load_external_vectors(path).map_err(data_err)?)
                }
                None => None,
            };
            let tfidf = match external {
                Some(_) => None,
                None => Some(fit_tfidf(&corpus, FieldSelector::Both).map_err(data_err)?),
            };
            let provider: &dyn EmbeddingProvider = match (&external, &tfidf) {
                (Some(v), _) => v,
                (None, Some(m)) => m,
                (None, None) => unreachable!("one embedding provider is always built"),
            };
            search_dense(provider, &query_id, &query_text, &corpus, &pool, args.k)
                .map_err(data_err)?
        }
    };
    for (rank, scored) in run.ranking.iter().enumerate() {
        println!("{} {} {:.6}", rank + 1, scored.doc_id, scored.score);
    }
    Ok(())
}

fn cmd_evaluate(
    cfg: &FileConfig,
    out_dir: &Path,
    seed: u64,
    args: &EvaluateArgs,
) -> Result<(), CliError> {
    let corpus = load_configured_corpus(cfg)?;
    let experiment = cfg.experiment(seed, args.row.as_deref()).map_err(CliError::Config)?;
    let report = run_experiment(&corpus, &experiment).map_err(|e| match e {
        EvalError::ZeroK
        | EvalError::NoRows
        | EvalError::ConfigConflict { .. }
        | EvalError::MissingConceptFile { .. } => config_err(e),
        other => data_err(other),
    })?;
    ensure_out_dir(out_dir)?;
    let json_path = out_dir.join("report.json");
    let text_path = out_dir.join("report.txt");
    let mut json = report.to_json();
    json.push('\n');
    fs::write(&json_path, json)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", json_path.display())))?;
    let table = report.to_text_table();
    fs::write(&text_path, &table)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", text_path.display())))?;
    print!("{table}");
    eprintln!("wrote {} and {}", json_path.display(), text_path.display());
    Ok(())
}
