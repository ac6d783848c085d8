//! Weak supervision: label aligned-but-underspecified entities from their
//! description embeddings.
//!
//! A classifier is trained on gold-labeled entities (one `content` segment,
//! plain cross-entropy) after a seeded stratified holdout is set aside for the
//! report. It then labels entities that have no type (`weak_wikidata`) or only
//! a coarse type (`weak_specialized`).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifier::{
    self, argmax, labeled_examples, Example, LossWeights, MlpModel, TrainConfig, CONTENT_SEGMENT, DEFAULT_HIDDEN,
};
use crate::corpus::{LabelRecord, LabelSource, TargetKind, WeakTarget};
use crate::embedstore::{EmbeddingSet, SegmentMap};
use crate::eval::{metrics, ConfusionMatrix};
use crate::ontology::TypeSchema;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakLabelConfig {
    pub train: TrainConfig,
    pub hidden_dims: Vec<usize>,
    pub holdout_fraction: f64,
    /// Keep `weak_specialized` predictions inside the target's known coarse class.
    pub restrict_coarse: bool,
}

impl Default for WeakLabelConfig {
    fn default() -> Self {
        WeakLabelConfig {
            train: TrainConfig::default(),
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            holdout_fraction: 0.01,
            restrict_coarse: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakLabelReport {
    /// Weighted F1 on the stratified holdout; `None` if the holdout is empty.
    pub holdout_weighted_f1: Option<f64>,
    pub holdout_size: usize,
    pub train_size: usize,
    pub assigned: BTreeMap<LabelSource, usize>,
    pub skipped_missing_embedding: usize,
    /// Coarse-only targets whose coarse class has no trained fine type.
    pub skipped_no_candidate: usize,
    pub gold_missing_embedding: usize,
}

#[derive(Debug, Clone)]
pub struct WeakLabelOutcome {
    pub labels: Vec<LabelRecord>,
    pub report: WeakLabelReport,
    pub model: MlpModel,
}

/// Per-class holdout sizes that add up to `round(fraction * n)` (at least one
/// example when `n >= 2`), allotted by largest remainder so that no class is
/// more than one example away from its proportional share.
pub fn stratified_quota(class_sizes: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    let mut target = (fraction * n as f64).round() as usize;
    if n >= 2 && fraction > 0.0 {
        target = target.max(1);
    }
    let target = target.min(n.saturating_sub(1));
    let exact: Vec<f64> = class_sizes.iter().map(|&c| c as f64 * target as f64 / n.max(1) as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = target - quota.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if quota[i] < class_sizes[i] {
            quota[i] += 1;
            left -= 1;
        }
    }
    quota
}

/// Splits example indices into (train, holdout) with a seeded stratified draw.
pub fn stratified_split(examples: &[Example], classes: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, ex) in examples.iter().enumerate() {
        by_class[ex.label].push(i);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = stratified_quota(&sizes, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (members, q) in by_class.iter_mut().zip(quota) {
        members.shuffle(&mut rng);
        holdout.extend_from_slice(&members[..q]);
        train.extend_from_slice(&members[q..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    (train, holdout)
}

/// Trains the description classifier on `gold` and labels `targets`.
pub fn specialize_labels(
    desc: &EmbeddingSet,
    gold: &[LabelRecord],
    targets: &[WeakTarget],
    schema: &TypeSchema,
    config: &WeakLabelConfig,
) -> Result<WeakLabelOutcome> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("no gold labels to learn from".into()));
    }
    for g in gold {
        schema.coarse_of(&g.fine)?;
    }
    let vocab = classifier::label_vocab(gold);
    let data = labeled_examples(desc, gold, &vocab)?;
    if data.examples.is_empty() {
        return Err(Error::EmptyInput("no gold entity has a description embedding".into()));
    }
    let (train_idx, holdout_idx) =
        stratified_split(&data.examples, vocab.len(), config.holdout_fraction, config.train.seed);
    let train_set: Vec<Example> = train_idx.iter().map(|&i| data.examples[i].clone()).collect();

    let segments = SegmentMap::from_lengths([(CONTENT_SEGMENT, desc.dim())])?;
    let model = MlpModel::init(
        desc.dim(),
        &config.hidden_dims,
        vocab.clone(),
        segments,
        LossWeights::full_only(),
        config.train.seed,
    )?;
    let (model, _) = classifier::train(model, &train_set, &config.train)?;

    let holdout_weighted_f1 = if holdout_idx.is_empty() {
        None
    } else {
        let pairs = holdout_idx
            .iter()
            .map(|&i| {
                let ex = &data.examples[i];
                Ok((ex.label, model.classify(&ex.features)?.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(metrics(&ConfusionMatrix::from_indices(vocab.clone(), &pairs)?)?.weighted_f1)
    };

    let coarse: Vec<_> = vocab.iter().map(|v| schema.coarse_of(v)).collect::<Result<_>>()?;
    let mut report = WeakLabelReport {
        holdout_weighted_f1,
        holdout_size: holdout_idx.len(),
        train_size: train_set.len(),
        assigned: [LabelSource::WeakWikidata, LabelSource::WeakSpecialized]
            .into_iter()
            .map(|s| (s, 0))
            .collect(),
        skipped_missing_embedding: 0,
        skipped_no_candidate: 0,
        gold_missing_embedding: data.missing.len(),
    };
    let mut labels = Vec::new();
    for t in targets {
        let Some(x) = desc.get(&t.entity_id) else {
            report.skipped_missing_embedding += 1;
            continue;
        };
        let probs = model.forward(x)?;
        let (mut best, _) = argmax(&probs);
        if let TargetKind::CoarseOnly(c) = t.kind {
            if config.restrict_coarse && coarse[best] != c {
                // highest-probability label within the known coarse class, lowest index on ties
                let within = (0..vocab.len())
                    .filter(|&i| coarse[i] == c)
                    .fold(None, |acc: Option<usize>, i| match acc {
                        Some(j) if probs[j] >= probs[i] => Some(j),
                        _ => Some(i),
                    });
                match within {
                    Some(i) => best = i,
                    None => {
                        report.skipped_no_candidate += 1;
                        continue;
                    }
                }
            }
        }
        let source = t.kind.label_source();
        *report.assigned.entry(source).or_default() += 1;
        labels.push(LabelRecord::new(&t.entity_id, &vocab[best], source));
    }
    Ok(WeakLabelOutcome { labels, report, model })
}
