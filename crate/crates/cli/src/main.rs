//! Command surface for the screening pipeline. Every stage is reachable on
//! its own (generate, anonymize, embed, train, evaluate, report) and `run`
//! drives the whole grid from a single TOML config. Defaults mirror the
//! library defaults.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fairscreen::anonymizer::{
    anonymize_corpus, BuiltinTagger, Gazetteer, LabelSet, NerBackendConfig, NerClient, Tagger,
};
use fairscreen::corpus::{generate_corpus, load_corpus, save_corpus, split_corpus, GeneratorConfig};
use fairscreen::embedder::{
    embed_corpus, load_embedding_cache, save_embedding_cache, BioField, EmbedderConfig,
    EmbeddingCacheHeader, EmbeddingTable,
};
use fairscreen::fairness::top_k_shortlist;
use fairscreen::pipeline::{
    run_pipeline, Overrides, PipelineConfig, StageSet, NER_ENDPOINT_ENV,
};
use fairscreen::scorer::{
    init_params, load_snapshot, overall_accuracy, predict_scores, save_snapshot, sector_accuracy,
    train, FusionInputs, ScoreTarget, SnapshotMeta, Task, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "fairscreen",
    about = "Privacy- and bias-aware resume screening pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic resume corpus.
    Generate(GenerateArgs),
    /// Mask PER/LOC entities in a corpus file.
    Anonymize(AnonymizeArgs),
    /// Embed corpus biographies into a binary cache.
    Embed(EmbedArgs),
    /// Train an occupancy or scoring head.
    Train(TrainArgs),
    /// Evaluate a trained snapshot on the test split.
    Evaluate(EvaluateArgs),
    /// Re-emit the report from a finished run directory.
    Report(ReportArgs),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of resumes.
    #[arg(long, default_value_t = 24_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score penalty applied to female candidates, in [0, 1).
    #[arg(long, default_value_t = 0.15)]
    bias_strength: f64,
    /// Output corpus file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Builtin,
    External,
}

#[derive(Args)]
struct AnonymizeArgs {
    /// Input corpus file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated entity labels to mask, e.g. "per,loc".
    #[arg(long, default_value = "per,loc")]
    entities: String,
    #[arg(long, value_enum, default_value_t = BackendArg::Builtin)]
    backend: BackendArg,
    /// External backend base URL (FAIRSCREEN_NER_ENDPOINT overrides).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 8)]
    max_concurrent: usize,
    /// Person gazetteer file (one entry per line); built-in list if absent.
    #[arg(long, requires = "gazetteer_loc")]
    gazetteer_per: Option<PathBuf>,
    /// Location gazetteer file (one entry per line).
    #[arg(long, requires = "gazetteer_per")]
    gazetteer_loc: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Raw,
    Neutral,
}

#[derive(Args)]
struct EmbedArgs {
    /// Input corpus file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output binary embedding cache.
    #[arg(long)]
    out: PathBuf,
    /// Which biography field to embed.
    #[arg(long, value_enum, default_value_t = FieldArg::Raw)]
    field: FieldArg,
    /// Embedding dimension L.
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32_768)]
    vocab_buckets: u32,
    #[arg(long, default_value_t = 256)]
    max_len: usize,
    /// Keep original casing instead of lowercasing.
    #[arg(long)]
    keep_case: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Occupancy,
    Scoring,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    G,
    H2g,
    H1h2g,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Biased,
    Blind,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Full corpus file; split internally by --train-fraction.
    #[arg(long)]
    corpus: PathBuf,
    /// Embedding cache aligned with the corpus.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Shuffle seed for the train/test split; defaults to --seed.
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    /// Which activations feed the fusion head.
    #[arg(long, value_enum, default_value_t = FusionArg::H1h2g)]
    fusion: FusionArg,
    /// Scoring only: train the fusion head with the MLP fixed.
    #[arg(long)]
    freeze_occupancy: bool,
    /// Which generated score the scoring task regresses to.
    #[arg(long, value_enum, default_value_t = TargetArg::Biased)]
    score_target: TargetArg,
    #[arg(long)]
    snapshot_out: PathBuf,
    #[arg(long)]
    curve_out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    /// Shortlist size for the scoring task.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Which part of the corpus to evaluate on.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Pipeline config the run was produced with.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory override (defaults to the config's out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML); library defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stages to execute: "all" or a comma list like "generate,embed".
    #[arg(long, default_value = "all")]
    stages: String,
    /// Recompute everything, ignoring persisted intermediates.
    #[arg(long)]
    no_cache: bool,
}

fn build_tagger(args: &AnonymizeArgs) -> anyhow::Result<Box<dyn Tagger>> {
    match args.backend {
        BackendArg::Builtin => {
            let gazetteer = match (&args.gazetteer_per, &args.gazetteer_loc) {
                (Some(per), Some(loc)) => Gazetteer::from_files(per, loc)?,
                _ => Gazetteer::builtin_default(),
            };
            Ok(Box::new(BuiltinTagger::new(gazetteer)))
        }
        BackendArg::External => {
            let endpoint = std::env::var(NER_ENDPOINT_ENV)
                .ok()
                .or_else(|| args.endpoint.clone())
                .context("external backend needs --endpoint or FAIRSCREEN_NER_ENDPOINT")?;
            Ok(Box::new(NerClient::new(&NerBackendConfig {
                endpoint,
                timeout_secs: args.timeout_secs,
                retries: args.retries,
                backend_name: "external".into(),
                max_concurrent: args.max_concurrent,
            })?))
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let config = GeneratorConfig::new(args.n, args.seed, args.bias_strength);
    let corpus = generate_corpus(&config)?;
    save_corpus(&corpus, &args.out)?;
    println!("wrote {} resumes to {}", corpus.len(), args.out.display());
    Ok(())
}

fn cmd_anonymize(args: AnonymizeArgs) -> anyhow::Result<()> {
    let labels = LabelSet::parse(&args.entities)?;
    let corpus = load_corpus(&args.input)?;
    let tagger = build_tagger(&args)?;
    let (masked, stats) = anonymize_corpus(&corpus, tagger.as_ref(), labels)?;
    save_corpus(&masked, &args.out)?;
    println!(
        "masked {} spans over {} words ({:.2}% of words) -> {}",
        stats.masked_spans,
        stats.total_words,
        100.0 * stats.masked_word_fraction,
        args.out.display()
    );
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> anyhow::Result<()> {
    let config = EmbedderConfig {
        dim: args.dim,
        vocab_buckets: args.vocab_buckets,
        seed: args.seed,
        max_len: args.max_len,
        lowercase: !args.keep_case,
    };
    let corpus = load_corpus(&args.input)?;
    let table = EmbeddingTable::build(&config)?;
    let field = match args.field {
        FieldArg::Raw => BioField::Raw,
        FieldArg::Neutral => BioField::Neutral,
    };
    let vectors = embed_corpus(&corpus, field, &table, &config)?;
    let ids: Vec<u64> = corpus.resumes.iter().map(|r| r.id).collect();
    save_embedding_cache(
        &args.out,
        EmbeddingCacheHeader {
            dim: config.dim as u32,
            vocab_buckets: config.vocab_buckets,
            seed: config.seed,
        },
        &ids,
        &vectors,
    )?;
    println!(
        "embedded {} biographies at dimension {} -> {}",
        vectors.len(),
        config.dim,
        args.out.display()
    );
    Ok(())
}

fn load_aligned(
    corpus_path: &PathBuf,
    cache_path: &PathBuf,
) -> anyhow::Result<(
    fairscreen::corpus::Corpus,
    Vec<fairscreen::embedder::EmbeddingVector>,
    usize,
)> {
    let corpus = load_corpus(corpus_path)?;
    let (header, ids, vectors) = load_embedding_cache(cache_path)?;
    let expected: Vec<u64> = corpus.resumes.iter().map(|r| r.id).collect();
    if ids != expected {
        bail!("embedding cache ids do not match the corpus");
    }
    Ok((corpus, vectors, header.dim as usize))
}

fn split_with_embeddings(
    corpus: &fairscreen::corpus::Corpus,
    vectors: &[fairscreen::embedder::EmbeddingVector],
    fraction: f64,
    seed: u64,
) -> anyhow::Result<(
    fairscreen::corpus::Corpus,
    Vec<fairscreen::embedder::EmbeddingVector>,
    fairscreen::corpus::Corpus,
    Vec<fairscreen::embedder::EmbeddingVector>,
)> {
    let index_of: std::collections::HashMap<u64, usize> = corpus
        .resumes
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id, i))
        .collect();
    let (train_part, test_part) = split_corpus(corpus, fraction, seed)?;
    let select = |part: &fairscreen::corpus::Corpus| {
        part.resumes
            .iter()
            .map(|r| vectors[index_of[&r.id]].clone())
            .collect::<Vec<_>>()
    };
    let train_emb = select(&train_part);
    let test_emb = select(&test_part);
    Ok((train_part, train_emb, test_part, test_emb))
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let (corpus, vectors, dim) = load_aligned(&args.corpus, &args.embeddings)?;
    let split_seed = args.split_seed.unwrap_or(args.seed);
    let (train_part, train_emb, test_part, test_emb) =
        split_with_embeddings(&corpus, &vectors, args.train_fraction, split_seed)?;

    let fusion = match args.fusion {
        FusionArg::G => FusionInputs::G,
        FusionArg::H2g => FusionInputs::H2G,
        FusionArg::H1h2g => FusionInputs::H1H2G,
    };
    let config = TrainConfig {
        task: match args.task {
            TaskArg::Occupancy => Task::Occupancy,
            TaskArg::Scoring => Task::Scoring,
        },
        epochs: args.epochs,
        batch_size: args.batch_size,
        dropout_rate: args.dropout,
        seed: args.seed,
        optimizer: fairscreen::scorer::AdamWConfig {
            learning_rate: args.learning_rate,
            weight_decay: args.weight_decay,
            ..fairscreen::scorer::AdamWConfig::default()
        },
        fusion,
        freeze_occupancy: args.freeze_occupancy,
        score_target: match args.score_target {
            TargetArg::Biased => ScoreTarget::Biased,
            TargetArg::Blind => ScoreTarget::Blind,
        },
    };
    let params0 = init_params(dim, fusion, args.seed)?;
    let (params, curve) = train(
        &train_part,
        &train_emb,
        Some((&test_part, &test_emb)),
        &config,
        params0,
    )?;
    save_snapshot(
        &params,
        SnapshotMeta {
            seed: args.seed,
            weight_decay: args.weight_decay,
        },
        &args.snapshot_out,
    )?;
    curve.write_csv(&args.curve_out)?;
    println!(
        "trained {} epochs on {} resumes; snapshot {}, curve {}",
        args.epochs,
        train_part.len(),
        args.snapshot_out.display(),
        args.curve_out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let (corpus, vectors, _) = load_aligned(&args.corpus, &args.embeddings)?;
    let (part, emb) = match args.split {
        SplitArg::All => (corpus.clone(), vectors.clone()),
        _ => {
            let (train_part, train_emb, test_part, test_emb) = split_with_embeddings(
                &corpus,
                &vectors,
                args.train_fraction,
                args.split_seed,
            )?;
            match args.split {
                SplitArg::Train => (train_part, train_emb),
                _ => (test_part, test_emb),
            }
        }
    };
    let (params, _) = load_snapshot(&args.snapshot)?;
    let output = match args.task {
        TaskArg::Occupancy => {
            let per_sector: std::collections::BTreeMap<String, f64> =
                sector_accuracy(&part, &emb, &params)?
                    .into_iter()
                    .map(|(g, v)| (g.label().to_string(), v))
                    .collect();
            serde_json::json!({
                "overall": overall_accuracy(&part, &emb, &params)?,
                "per_sector": per_sector,
            })
        }
        TaskArg::Scoring => {
            let scores = predict_scores(&part, &emb, &params)?;
            serde_json::to_value(top_k_shortlist(&part, &scores, args.k)?)?
        }
    };
    let rendered = serde_json::to_string_pretty(&output)?;
    match args.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&path, rendered + "\n")?;
            println!("wrote evaluation to {}", path.display());
        }
        None => println!("{rendered}"),
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let config = PipelineConfig::from_file(&args.config)?;
    let overrides = Overrides {
        seed: args.seed,
        out_dir: args.out,
        stages: StageSet::parse("report")?,
        no_cache: true,
    };
    let summary = run_pipeline(&config, &overrides)?;
    println!("report written to {}", summary.report_dir.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let config = match args.config {
        Some(path) => PipelineConfig::from_file(&path)?,
        None => PipelineConfig::default(),
    };
    let overrides = Overrides {
        seed: args.seed,
        out_dir: args.out,
        stages: StageSet::parse(&args.stages)?,
        no_cache: args.no_cache,
    };
    let summary = run_pipeline(&config, &overrides)?;
    println!(
        "run {} complete: {} grid cells, report at {}",
        summary.fingerprint,
        summary.cells,
        summary.report_dir.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Anonymize(args) => cmd_anonymize(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Report(args) => cmd_report(args),
        Command::Run(args) => cmd_run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
