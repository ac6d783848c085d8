use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use socialtyper::classifier::{self, LossWeights, MlpModel, TrainConfig};
use socialtyper::corpus::{self, LabelRecord, LabelSource};
use socialtyper::embedstore::{self, EmbeddingSet, SegmentMap};
use socialtyper::eval::{self, MacroAveraging, MetricsReport};
use socialtyper::ontology::{self, TypeSchema};
use socialtyper::simsearch;
use socialtyper::weaklabel::{self, WeakLabelConfig};

use crate::manifest::{self, Manifest};
use crate::*;

/// An invocation problem detected after argument parsing; exits with 2.
#[derive(Debug)]
pub struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Files touched by one run.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Io {
    fn input(&mut self, p: &Path) -> Result<()> {
        if !p.is_file() {
            return Err(UsageError(format!("input file not found: {}", p.display())).into());
        }
        self.inputs.push(p.to_path_buf());
        Ok(())
    }

    fn opt_input(&mut self, p: Option<&PathBuf>) -> Result<()> {
        p.map_or(Ok(()), |p| self.input(p))
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(socialtyper::DEFAULT_SEED);
    let mut io = Io::default();
    declare_inputs(&cli.command, &mut io)?;
    let primary = match &cli.command {
        Command::SchemaInduce(a) => schema_induce(a, &mut io)?,
        Command::Align(a) => align(a, &mut io)?,
        Command::WeakLabel(a) => weak_label(a, seed, &mut io)?,
        Command::DatasetBuild(a) => dataset_build(a, seed, &mut io)?,
        Command::Aggregate(a) => aggregate(a, &mut io)?,
        Command::Fuse(a) => fuse(a, &mut io)?,
        Command::Train(a) => train(a, seed, &mut io)?,
        Command::Evaluate(a) => evaluate(a, &mut io)?,
        Command::Predict(a) => predict(a, &mut io)?,
        Command::Distribution(a) => distribution(a, &mut io)?,
        Command::CoverageReport(a) => coverage(a, &mut io)?,
        Command::Similar(a) => similar(a, &mut io)?,
    };

    let name = cli.command.name();
    let path = cli.manifest.unwrap_or_else(|| manifest::default_path(primary.as_deref(), name));
    let m = Manifest {
        tool: "socialtyper",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name,
        seed,
        config: &cli.command,
        inputs: io.inputs.iter().map(|p| manifest::digest(p)).collect::<Result<_>>()?,
        outputs: io.outputs.iter().map(|p| manifest::digest(p)).collect::<Result<_>>()?,
    };
    manifest::write(&path, &m)
}

/// Checks that every input exists before any work starts.
fn declare_inputs(cmd: &Command, io: &mut Io) -> Result<()> {
    match cmd {
        Command::SchemaInduce(a) => io.input(&a.paths),
        Command::Align(a) => {
            io.input(&a.entities)?;
            io.input(&a.wikidata)?;
            io.opt_input(a.dbpedia.as_ref())
        }
        Command::WeakLabel(a) => {
            io.input(&a.alignments)?;
            io.input(&a.schema)?;
            io.input(&a.desc)
        }
        Command::DatasetBuild(a) => {
            io.input(&a.alignments)?;
            io.input(&a.schema)?;
            io.opt_input(a.weak.as_ref())
        }
        Command::Aggregate(a) => io.input(&a.items),
        Command::Fuse(a) => a.parts.iter().try_for_each(|(_, p)| io.input(p)),
        Command::Train(a) => {
            io.input(&a.labels)?;
            io.input(&a.emb)?;
            io.input(&a.segments.clone().unwrap_or_else(|| sidecar(&a.emb)))
        }
        Command::Evaluate(a) => {
            io.input(&a.gold)?;
            io.opt_input(a.model.as_ref())?;
            io.opt_input(a.emb.as_ref())?;
            io.opt_input(a.predictions.as_ref())?;
            io.opt_input(a.schema.as_ref())?;
            io.opt_input(a.secondary.as_ref())
        }
        Command::Predict(a) => {
            io.input(&a.model)?;
            io.input(&a.emb)?;
            io.opt_input(a.exclude.as_ref())
        }
        Command::Distribution(a) => {
            a.labels.iter().try_for_each(|p| io.input(p))?;
            io.input(&a.schema)
        }
        Command::CoverageReport(a) => {
            io.input(&a.entities)?;
            io.input(&a.alignments)
        }
        Command::Similar(a) => {
            io.input(&a.first)?;
            io.input(&a.second)?;
            io.opt_input(a.entities.as_ref())
        }
    }
}

/// `<emb>.segments.json`
fn sidecar(emb: &Path) -> PathBuf {
    let mut s = emb.as_os_str().to_owned();
    s.push(".segments.json");
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str, io: &mut Io) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    io.output(path);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, io: &mut Io) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text, io)
}

fn train_config(t: &TrainingFlags, seed: u64, shuffle: bool) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed,
        shuffle,
    }
}

fn schema_induce(a: &SchemaInduceArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let paths = ontology::read_counted_paths(&a.paths)?;
    let schema = ontology::induce_schema(&paths, a.depth_cutoff, a.min_count, &ontology::default_coarse_roots())?;
    log::info!("{} fine types", schema.len());
    schema.save(&a.out)?;
    io.output(&a.out);
    if let Some(f) = &a.frequencies {
        let mut text = String::from("path\tcount\tratio\n");
        for (p, count, ratio) in ontology::path_frequencies(&paths, a.depth_cutoff) {
            writeln!(text, "{p}\t{count}\t{ratio}")?;
        }
        write_text(f, &text, io)?;
    }
    Ok(Some(a.out.clone()))
}

fn align(a: &AlignArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let entities = corpus::load_entities(&a.entities)?;
    let index = corpus::read_wikidata_index(&a.wikidata)?;
    let mut alignments = corpus::align_wikidata(&entities, &index)?;
    if let Some(d) = &a.dbpedia {
        alignments = corpus::attach_dbpedia(&alignments, &corpus::read_dbpedia_types(d)?);
    }
    let matched = alignments.iter().filter(|r| r.qid.is_some()).count();
    log::info!("{matched} of {} entities aligned", entities.len());
    corpus::write_alignments(&a.out, &alignments)?;
    io.output(&a.out);
    Ok(Some(a.out.clone()))
}

fn weak_label(a: &WeakLabelArgs, seed: u64, io: &mut Io) -> Result<Option<PathBuf>> {
    let alignments = corpus::read_alignments(&a.alignments)?;
    let schema = TypeSchema::load(&a.schema)?;
    let desc = embedstore::read_embeddings(&a.desc)?;
    let gold = corpus::build_gold_labels(&alignments, &schema);
    let targets = corpus::weak_targets(&alignments, &schema);
    let config = WeakLabelConfig {
        train: train_config(&a.training, seed, true),
        hidden_dims: a.training.hidden.clone(),
        holdout_fraction: a.holdout_fraction,
        restrict_coarse: !a.unrestricted,
    };
    let outcome = weaklabel::specialize_labels(&desc, &gold, &targets, &schema, &config)?;
    corpus::write_labels(&a.out, &outcome.labels)?;
    io.output(&a.out);
    if let Some(r) = &a.report {
        write_json(r, &outcome.report, io)?;
    }
    Ok(Some(a.out.clone()))
}

#[derive(Serialize)]
struct DatasetReport {
    train: BTreeMap<LabelSource, usize>,
    test: usize,
}

fn dataset_build(a: &DatasetBuildArgs, seed: u64, io: &mut Io) -> Result<Option<PathBuf>> {
    let alignments = corpus::read_alignments(&a.alignments)?;
    let schema = TypeSchema::load(&a.schema)?;
    let gold = corpus::build_gold_labels(&alignments, &schema);
    let weak = match &a.weak {
        Some(w) => corpus::read_labels(w)?,
        None => Vec::new(),
    };
    for l in &weak {
        schema.coarse_of(&l.fine).with_context(|| format!("weak label for {}", l.entity_id))?;
    }
    let merged = corpus::merge_label_sources(&gold, &weak)?;
    let (train, test) = corpus::holdout_split(&merged.labels, a.test_fraction.unwrap_or(0.0), seed)?;
    corpus::write_labels(&a.out, &train)?;
    io.output(&a.out);
    if let Some(t) = &a.test_out {
        corpus::write_labels(t, &test)?;
        io.output(t);
    }
    if let Some(r) = &a.report {
        let mut counts = BTreeMap::new();
        for l in &train {
            *counts.entry(l.source).or_insert(0) += 1;
        }
        write_json(r, &DatasetReport { train: counts, test: test.len() }, io)?;
    }
    Ok(Some(a.out.clone()))
}

fn aggregate(a: &AggregateArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let items = embedstore::read_embeddings(&a.items)?;
    let set = embedstore::aggregate_items(&items)?;
    embedstore::write_embeddings(&set, &a.out)?;
    io.output(&a.out);
    Ok(Some(a.out.clone()))
}

fn fuse(a: &FuseArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let sets = a
        .parts
        .iter()
        .map(|(_, p)| embedstore::read_embeddings(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<(&str, &EmbeddingSet)> = a.parts.iter().map(|(n, _)| n.as_str()).zip(&sets).collect();
    let (fused, segments) = embedstore::fuse(&parts)?;
    log::info!("{} entities in the intersection", fused.len());
    embedstore::write_embeddings(&fused, &a.out)?;
    io.output(&a.out);
    let seg_path = a.segments_out.clone().unwrap_or_else(|| sidecar(&a.out));
    segments.save(&seg_path)?;
    io.output(&seg_path);
    Ok(Some(a.out.clone()))
}

fn train(a: &TrainArgs, seed: u64, io: &mut Io) -> Result<Option<PathBuf>> {
    let labels = corpus::read_labels(&a.labels)?;
    let emb = embedstore::read_embeddings(&a.emb)?;
    let segments = SegmentMap::load(a.segments.clone().unwrap_or_else(|| sidecar(&a.emb)))?;
    let vocab = classifier::label_vocab(&labels);
    let data = classifier::labeled_examples(&emb, &labels, &vocab)?;
    if !data.missing.is_empty() {
        log::warn!("{} labeled entities have no embedding and are skipped", data.missing.len());
    }
    let weights = LossWeights::new(a.alpha, a.beta, a.gamma)?;
    let model = MlpModel::init(emb.dim(), &a.training.hidden, vocab, segments, weights, seed)?;
    let config = train_config(&a.training, seed, !a.no_shuffle);
    let (model, history) = classifier::train(model, &data.examples, &config)?;
    model.save(&a.out)?;
    io.output(&a.out);
    if let Some(h) = &a.history {
        let mut text = String::from("epoch\tloss\n");
        for (i, l) in history.iter().enumerate() {
            writeln!(text, "{}\t{l}", i + 1)?;
        }
        write_text(h, &text, io)?;
    }
    Ok(Some(a.out.clone()))
}

#[derive(Serialize)]
struct Evaluation {
    evaluated: usize,
    /// Gold entities skipped for lack of an embedding or prediction.
    missing: usize,
    fine: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    coarse: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permissive_accuracy: Option<f64>,
}

fn evaluate(a: &EvaluateArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let gold_all = corpus::read_labels(&a.gold)?;
    let preds: Vec<LabelRecord> = match (&a.model, &a.emb, &a.predictions) {
        (Some(m), Some(e), _) => {
            let model = MlpModel::load(m)?;
            let emb = embedstore::read_embeddings(e)?;
            let mut subset = EmbeddingSet::new(emb.dim())?;
            let mut seen = HashSet::new();
            for g in &gold_all {
                if let Some(v) = emb.get(&g.entity_id) {
                    if seen.insert(g.entity_id.as_str()) {
                        subset.insert(&g.entity_id, v.to_vec())?;
                    }
                }
            }
            classifier::predict(&model, &subset)?.iter().map(|p| p.to_label()).collect()
        }
        (_, _, Some(p)) => corpus::read_labels(p)?,
        _ => return Err(UsageError("evaluate needs --model with --emb, or --predictions".into()).into()),
    };
    let predicted: HashSet<&str> = preds.iter().map(|p| p.entity_id.as_str()).collect();
    let gold: Vec<LabelRecord> = gold_all.iter().filter(|g| predicted.contains(g.entity_id.as_str())).cloned().collect();
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.entity_id.as_str()).collect();
    let preds: Vec<LabelRecord> = preds.into_iter().filter(|p| gold_ids.contains(p.entity_id.as_str())).collect();
    if gold.is_empty() {
        anyhow::bail!("no gold entity has a prediction");
    }

    let mut vocab: Vec<String> = gold.iter().chain(&preds).map(|l| l.fine.clone()).collect();
    vocab.sort();
    vocab.dedup();
    let averaging = match a.averaging {
        Averaging::GoldOrPredicted => MacroAveraging::GoldOrPredicted,
        Averaging::GoldOnly => MacroAveraging::GoldOnly,
    };
    let fine = eval::metrics_with(&eval::confusion(&preds, &gold, &vocab)?, averaging)?;
    let coarse = match &a.schema {
        Some(s) => Some(eval::coarse_rollup_with(&preds, &gold, &TypeSchema::load(s)?, averaging)?),
        None => None,
    };
    let permissive_accuracy = match &a.secondary {
        Some(s) => Some(eval::permissive_accuracy(&preds, &gold, &corpus::read_labels(s)?)),
        None => None,
    };
    let report = Evaluation {
        evaluated: gold.len(),
        missing: gold_all.len() - gold.len(),
        fine,
        coarse,
        permissive_accuracy,
    };
    write_json(&a.out, &report, io)?;
    if let Some(t) = &a.text {
        let mut text = format!("evaluated {} (missing {})\n\n{}", report.evaluated, report.missing, report.fine.to_text());
        if let Some(c) = &report.coarse {
            write!(text, "\ncoarse\n{}", c.to_text())?;
        }
        if let Some(p) = report.permissive_accuracy {
            writeln!(text, "\npermissive accuracy  {p:.3}")?;
        }
        write_text(t, &text, io)?;
    }
    Ok(Some(a.out.clone()))
}

fn predict(a: &PredictArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let model = MlpModel::load(&a.model)?;
    let mut emb = embedstore::read_embeddings(&a.emb)?;
    if let Some(x) = &a.exclude {
        let known: HashSet<String> = corpus::read_labels(x)?.into_iter().map(|l| l.entity_id).collect();
        let keep: Vec<(String, Vec<f64>)> = emb
            .iter()
            .filter(|(id, _)| !known.contains(*id))
            .map(|(id, v)| (id.to_string(), v.to_vec()))
            .collect();
        emb = EmbeddingSet::from_pairs(emb.dim(), keep)?;
    }
    let mut text = String::new();
    for p in classifier::predict(&model, &emb)? {
        writeln!(text, "{}\t{}\t{}\t{}", p.entity_id, p.fine, LabelSource::Predicted, p.confidence)?;
    }
    write_text(&a.out, &text, io)?;
    Ok(Some(a.out.clone()))
}

fn distribution(a: &DistributionArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let schema = TypeSchema::load(&a.schema)?;
    let mut seen = HashSet::new();
    let mut labels = Vec::new();
    for p in &a.labels {
        for l in corpus::read_labels(p)? {
            if seen.insert(l.entity_id.clone()) {
                labels.push(l);
            }
        }
    }
    let mut rows = eval::type_distribution(&labels, &schema)?;
    if let Some(n) = a.top {
        rows.truncate(n);
    }
    let mut by_source: BTreeMap<LabelSource, usize> = BTreeMap::new();
    for l in &labels {
        *by_source.entry(l.source).or_insert(0) += 1;
    }
    let mut text = String::new();
    for (s, n) in &by_source {
        writeln!(text, "# {s}\t{n}")?;
    }
    writeln!(text, "# total\t{}", labels.len())?;
    text.push_str(&eval::distribution_text(&rows));
    write_text(&a.out, &text, io)?;
    if let Some(j) = &a.json {
        #[derive(Serialize)]
        struct Dist<'a> {
            sources: &'a BTreeMap<LabelSource, usize>,
            total: usize,
            rows: &'a [eval::DistributionRow],
        }
        write_json(
            j,
            &Dist {
                sources: &by_source,
                total: labels.len(),
                rows: &rows,
            },
            io,
        )?;
    }
    Ok(Some(a.out.clone()))
}

fn coverage(a: &CoverageArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let entities = corpus::load_entities(&a.entities)?;
    let aligned: HashSet<String> = corpus::read_alignments(&a.alignments)?
        .into_iter()
        .filter(|r| r.qid.is_some())
        .map(|r| r.entity_id)
        .collect();
    let report = corpus::coverage_by_popularity(&entities, &aligned, a.bin_size)?;
    let mut text = String::from("first_rank\tlast_rank\tentities\taligned\tratio\n");
    for b in &report.bins {
        writeln!(text, "{}\t{}\t{}\t{}\t{}", b.first_rank, b.last_rank, b.entities, b.aligned, b.ratio)?;
    }
    write_text(&a.out, &text, io)?;
    if let Some(j) = &a.json {
        write_json(j, &report, io)?;
    }
    Ok(Some(a.out.clone()))
}

fn similar(a: &SimilarArgs, io: &mut Io) -> Result<Option<PathBuf>> {
    let first = embedstore::read_embeddings(&a.first)?;
    let second = embedstore::read_embeddings(&a.second)?;
    let list = match a.mode {
        SimilarMode::Rerank => {
            let r = simsearch::rerank(&a.query, &first, &second, a.k)?;
            if r.missing_in_second > 0 {
                log::warn!("{} candidates lack a vector in the second space", r.missing_in_second);
            }
            r.list
        }
        SimilarMode::Concat => simsearch::concat_topk(&a.query, &[&first, &second], a.k)?,
        SimilarMode::Average => simsearch::weighted_topk(&a.query, &first, &second, a.weight, a.k)?,
    };
    let handles: HashMap<String, String> = match &a.entities {
        Some(p) => corpus::load_entities(p)?.into_iter().map(|e| (e.id, e.handle)).collect(),
        None => HashMap::new(),
    };
    let mut text = String::from("rank\tentity_id\thandle\tscore\n");
    for (i, r) in list.entries.iter().enumerate() {
        let handle = handles.get(&r.entity_id).map_or("", String::as_str);
        writeln!(text, "{}\t{}\t{handle}\t{:.6}", i + 1, r.entity_id, r.score)?;
    }
    match &a.out {
        Some(p) => write_text(p, &text, io)?,
        None => print!("{text}"),
    }
    Ok(a.out.clone())
}
