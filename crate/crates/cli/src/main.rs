//! `socialtyper` — runs each pipeline stage as a subcommand.
//!
//! Every run writes a manifest JSON next to its primary output recording the
//! configuration, seed and SHA-256 of every input and output file.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "socialtyper", version, about = "Semantic typing for social knowledge bases")]
struct Cli {
    /// RNG seed; falls back to SOCIALTYPER_SEED, then 42.
    #[arg(long, global = true, env = "SOCIALTYPER_SEED")]
    seed: Option<u64>,

    /// Where to write the run manifest (default: `<out>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Induce the fine/coarse type schema from counted ontology paths.
    SchemaInduce(SchemaInduceArgs),
    /// Align accounts with Wikidata items and attach DBpedia type paths.
    Align(AlignArgs),
    /// Specialize weak targets with a description-only classifier.
    WeakLabel(WeakLabelArgs),
    /// Merge gold and weak labels into a training set, optionally holding out a test split.
    DatasetBuild(DatasetBuildArgs),
    /// Average per-item embeddings (`entity#n`) into one vector per entity.
    Aggregate(AggregateArgs),
    /// Concatenate embedding spaces over shared entities.
    Fuse(FuseArgs),
    /// Train the composite-loss classifier.
    Train(TrainArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Predict fine types for every embedded entity.
    Predict(PredictArgs),
    /// Report the type distribution of one or more label files.
    Distribution(DistributionArgs),
    /// Alignment coverage by descending popularity.
    CoverageReport(CoverageArgs),
    /// Rank entities similar to a query.
    Similar(SimilarArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SchemaInduce(_) => "schema-induce",
            Command::Align(_) => "align",
            Command::WeakLabel(_) => "weak-label",
            Command::DatasetBuild(_) => "dataset-build",
            Command::Aggregate(_) => "aggregate",
            Command::Fuse(_) => "fuse",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Predict(_) => "predict",
            Command::Distribution(_) => "distribution",
            Command::CoverageReport(_) => "coverage-report",
            Command::Similar(_) => "similar",
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SchemaInduceArgs {
    /// Ontology paths, one `A/B/C[\tcount]` per line.
    #[arg(long)]
    paths: PathBuf,
    #[arg(long, default_value_t = socialtyper::ontology::DEFAULT_MIN_COUNT)]
    min_count: u64,
    #[arg(long, default_value_t = socialtyper::ontology::DEFAULT_DEPTH_CUTOFF)]
    depth_cutoff: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional TSV of path frequencies below the cutoff.
    #[arg(long)]
    frequencies: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AlignArgs {
    /// Entity records (JSON lines).
    #[arg(long)]
    entities: PathBuf,
    /// `qid \t account_id \t description` rows.
    #[arg(long)]
    wikidata: PathBuf,
    /// `qid \t type/path` rows.
    #[arg(long)]
    dbpedia: Option<PathBuf>,
    /// Alignment records (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainingFlags {
    /// Hidden layer sizes, comma separated; empty for none.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "50")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long = "lr", default_value_t = 0.01)]
    learning_rate: f64,
}

#[derive(Debug, Args, Serialize)]
struct WeakLabelArgs {
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Description embeddings.
    #[arg(long)]
    desc: PathBuf,
    /// Weak labels (TSV).
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON report (holdout F1, counts).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    holdout_fraction: f64,
    /// Allow predictions outside an entity's known coarse class.
    #[arg(long)]
    unrestricted: bool,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Debug, Args, Serialize)]
struct DatasetBuildArgs {
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Weak labels to add for entities without a gold label.
    #[arg(long)]
    weak: Option<PathBuf>,
    /// Training labels (TSV).
    #[arg(long)]
    out: PathBuf,
    /// Held-out gold labels (TSV).
    #[arg(long, requires = "test_fraction")]
    test_out: Option<PathBuf>,
    #[arg(long, requires = "test_out")]
    test_fraction: Option<f64>,
    /// Optional JSON with per-source counts.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AggregateArgs {
    /// Per-item embeddings with ids `entity#n`.
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FuseArgs {
    /// `name=path`, repeated in concatenation order.
    #[arg(long = "part", required = true, value_parser = parse_part)]
    parts: Vec<(String, PathBuf)>,
    #[arg(long)]
    out: PathBuf,
    /// Segment map (default: `<out>.segments.json`).
    #[arg(long)]
    segments_out: Option<PathBuf>,
}

fn parse_part(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Fused embeddings.
    #[arg(long)]
    emb: PathBuf,
    /// Segment map (default: `<emb>.segments.json`).
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[command(flatten)]
    training: TrainingFlags,
    /// Keep example order fixed instead of reshuffling every epoch.
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch mean loss (TSV).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Averaging {
    GoldOrPredicted,
    GoldOnly,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, requires = "emb", conflicts_with = "predictions")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    emb: Option<PathBuf>,
    /// Existing predictions (TSV) instead of a model.
    #[arg(long, required_unless_present = "model")]
    predictions: Option<PathBuf>,
    /// Adds the coarse-level report.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Second annotation; enables permissive accuracy.
    #[arg(long)]
    secondary: Option<PathBuf>,
    #[arg(long = "macro", value_enum, default_value = "gold-or-predicted")]
    averaging: Averaging,
    /// Metrics JSON.
    #[arg(long)]
    out: PathBuf,
    /// Human-readable report.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    /// Skip entities that already have a label here.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// `entity \t fine \t predicted \t confidence` rows.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DistributionArgs {
    /// Label files, merged in order; the first label for an entity wins.
    #[arg(long, required = true)]
    labels: Vec<PathBuf>,
    #[arg(long)]
    schema: PathBuf,
    /// Keep only the N most frequent types.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CoverageArgs {
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    bin_size: usize,
    /// Per-bin TSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimilarMode {
    /// Top-k in the first space, reordered by the second.
    Rerank,
    /// Cosine over concatenated vectors.
    Concat,
    /// Weighted mean of the two cosines.
    Average,
}

#[derive(Debug, Args, Serialize)]
struct SimilarArgs {
    #[arg(long)]
    query: String,
    /// Candidate-selection space (content by convention).
    #[arg(long)]
    first: PathBuf,
    /// Reordering space (network by convention).
    #[arg(long)]
    second: PathBuf,
    #[arg(long, default_value_t = socialtyper::simsearch::DEFAULT_K)]
    k: usize,
    #[arg(long, value_enum, default_value = "rerank")]
    mode: SimilarMode,
    /// Weight of the first space in `average` mode.
    #[arg(long, default_value_t = 0.5)]
    weight: f64,
    /// Entity records, for the handle column.
    #[arg(long)]
    entities: Option<PathBuf>,
    /// TSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
