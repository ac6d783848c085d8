//! Classification metrics and label-distribution reports.
//!
//! Zero denominators give 0 for precision, recall and F1. Macro-F1 averages
//! over the vocabulary classes that occur in gold or predictions by default;
//! [`MacroAveraging::GoldOnly`] restricts it to classes with gold support.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::LabelRecord;
use crate::ontology::{CoarseType, TypeSchema};
use crate::{Error, Result};

/// Rows are gold labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidShape(format!("confusion matrix must be {n}x{n}")));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    /// Tallies `(gold, predicted)` index pairs.
    pub fn from_indices(labels: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut counts = vec![vec![0; n]; n];
        for &(g, p) in pairs {
            if g >= n || p >= n {
                return Err(Error::UnknownLabel {
                    index: g.max(p),
                    size: n,
                });
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Builds the confusion matrix of predictions against gold labels, joined on entity id.
///
/// Every gold entity needs exactly one prediction; predictions for entities
/// without gold are ignored.
pub fn confusion(preds: &[LabelRecord], gold: &[LabelRecord], vocab: &[String]) -> Result<ConfusionMatrix> {
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let lookup = |label: &str| index.get(label).copied().ok_or_else(|| Error::UnknownType(label.to_string()));
    let mut predicted: HashMap<&str, usize> = HashMap::new();
    for p in preds {
        if predicted.insert(&p.entity_id, lookup(&p.fine)?).is_some() {
            return Err(Error::DuplicateId(p.entity_id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.entity_id.as_str()) {
            return Err(Error::DuplicateId(g.entity_id.clone()));
        }
        let p = predicted
            .get(g.entity_id.as_str())
            .copied()
            .ok_or_else(|| Error::MissingPrediction(g.entity_id.clone()))?;
        pairs.push((lookup(&g.fine)?, p));
    }
    ConfusionMatrix::from_indices(vocab.to_vec(), &pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacroAveraging {
    /// Classes occurring in gold or predictions.
    #[default]
    GoldOrPredicted,
    /// Classes with gold support only.
    GoldOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(m: &ConfusionMatrix) -> Result<MetricsReport> {
    metrics_with(m, MacroAveraging::default())
}

pub fn metrics_with(m: &ConfusionMatrix, averaging: MacroAveraging) -> Result<MetricsReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix has no examples".into()));
    }
    let n = m.labels.len();
    let mut per_class = Vec::with_capacity(n);
    let (mut macro_sum, mut macro_n, mut weighted) = (0.0, 0usize, 0.0);
    for c in 0..n {
        let tp = m.counts[c][c];
        let support: u64 = m.counts[c].iter().sum();
        let predicted: u64 = m.counts.iter().map(|r| r[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let counted = match averaging {
            MacroAveraging::GoldOrPredicted => support + predicted > 0,
            MacroAveraging::GoldOnly => support > 0,
        };
        if counted {
            macro_sum += f1;
            macro_n += 1;
        }
        weighted += support as f64 / total as f64 * f1;
        per_class.push(ClassMetrics {
            label: m.labels[c].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(MetricsReport {
        accuracy: ratio(m.trace(), total),
        macro_f1: if macro_n == 0 { 0.0 } else { macro_sum / macro_n as f64 },
        weighted_f1: weighted,
        per_class,
    })
}

impl MetricsReport {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let width = self.per_class.iter().map(|c| c.label.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "f1", "support").unwrap();
        for c in &self.per_class {
            writeln!(
                out,
                "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}",
                c.label, c.precision, c.recall, c.f1, c.support
            )
            .unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "accuracy     {:.3}", self.accuracy).unwrap();
        writeln!(out, "macro f1     {:.3}", self.macro_f1).unwrap();
        writeln!(out, "weighted f1  {:.3}", self.weighted_f1).unwrap();
        out
    }
}

fn to_coarse(labels: &[LabelRecord], schema: &TypeSchema) -> Result<Vec<LabelRecord>> {
    labels
        .iter()
        .map(|l| Ok(LabelRecord::new(&l.entity_id, schema.coarse_of(&l.fine)?.as_str(), l.source)))
        .collect()
}

/// Metrics over the five coarse classes after mapping each fine label through the schema.
pub fn coarse_rollup(preds: &[LabelRecord], gold: &[LabelRecord], schema: &TypeSchema) -> Result<MetricsReport> {
    coarse_rollup_with(preds, gold, schema, MacroAveraging::default())
}

pub fn coarse_rollup_with(
    preds: &[LabelRecord],
    gold: &[LabelRecord],
    schema: &TypeSchema,
    averaging: MacroAveraging,
) -> Result<MetricsReport> {
    let vocab: Vec<String> = CoarseType::ALL.iter().map(|c| c.to_string()).collect();
    let cm = confusion(&to_coarse(preds, schema)?, &to_coarse(gold, schema)?, &vocab)?;
    metrics_with(&cm, averaging)
}

/// Share of primary-labeled entities whose prediction equals the primary label
/// or one of its secondary labels. Entities without a prediction count as
/// misses; an empty primary set gives 0.
pub fn permissive_accuracy(preds: &[LabelRecord], primary: &[LabelRecord], secondary: &[LabelRecord]) -> f64 {
    let predicted: HashMap<&str, &str> = preds.iter().map(|p| (p.entity_id.as_str(), p.fine.as_str())).collect();
    let mut alternates: HashMap<&str, Vec<&str>> = HashMap::new();
    for s in secondary {
        alternates.entry(&s.entity_id).or_default().push(&s.fine);
    }
    if primary.is_empty() {
        return 0.0;
    }
    let hits = primary
        .iter()
        .filter(|g| {
            predicted.get(g.entity_id.as_str()).is_some_and(|p| {
                *p == g.fine || alternates.get(g.entity_id.as_str()).is_some_and(|alts| alts.contains(p))
            })
        })
        .count();
    hits as f64 / primary.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub coarse: CoarseType,
    pub fine: String,
    pub count: u64,
    pub ratio: f64,
    pub cumulative: f64,
}

/// Label histogram, most frequent type first (ties by name).
pub fn type_distribution(labels: &[LabelRecord], schema: &TypeSchema) -> Result<Vec<DistributionRow>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labels".into()));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for l in labels {
        *counts.entry(&l.fine).or_default() += 1;
    }
    let mut rows: Vec<(&str, u64)> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let total = labels.len() as u64;
    let mut running = 0;
    rows.into_iter()
        .map(|(fine, count)| {
            running += count;
            Ok(DistributionRow {
                coarse: schema.coarse_of(fine)?,
                fine: fine.to_string(),
                count,
                ratio: count as f64 / total as f64,
                cumulative: running as f64 / total as f64,
            })
        })
        .collect()
}

/// `Coarse  Fine  Ratio [%]  Cumulative [%]` table.
pub fn distribution_text(rows: &[DistributionRow]) -> String {
    let width = rows.iter().map(|r| r.fine.len()).max().unwrap_or(0).max(4);
    let mut out = String::new();
    writeln!(out, "{:<12}  {:<width$}  {:>9}  {:>14}", "Coarse", "Fine", "Ratio [%]", "Cumulative [%]").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<12}  {:<width$}  {:>9.2}  {:>14.2}",
            r.coarse.as_str(),
            r.fine,
            100.0 * r.ratio,
            100.0 * r.cumulative
        )
        .unwrap();
    }
    out
}
