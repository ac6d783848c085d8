//! Feed-forward softmax classifier over fused entity embeddings.
//!
//! Hidden layers use a rectifier; the output layer is a softmax over the label
//! vocabulary. Training minimizes the composite loss
//!
//! ```text
//! L = alpha * L_network + beta * L_content + gamma * L_full
//! ```
//!
//! where `L_full` is the cross-entropy of the unmasked input and `L_network` /
//! `L_content` are cross-entropies of the same network fed only the `network` or
//! only the `content` segment of the input (every other coordinate zeroed).
//! All three terms share one parameter set.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelRecord, LabelSource};
use crate::embedstore::{EmbeddingSet, SegmentMap};
use crate::{Error, Result, DEFAULT_SEED};

pub const NETWORK_SEGMENT: &str = "network";
pub const CONTENT_SEGMENT: &str = "content";

pub const MODEL_VERSION: u32 = 1;

pub const DEFAULT_HIDDEN: [usize; 1] = [50];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = LossWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    /// Plain cross-entropy on the full input.
    pub fn full_only() -> Self {
        LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and >= 0, got {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidConfig("loss weights are all zero".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 5.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

/// Dense layer; `weights` is row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let outputs = weights.len();
        let inputs = weights.first().map_or(0, Vec::len);
        if outputs == 0 || inputs == 0 {
            return Err(Error::InvalidShape("layer has no weights".into()));
        }
        if weights.iter().any(|r| r.len() != inputs) {
            return Err(Error::InvalidShape("ragged weight matrix".into()));
        }
        if bias.len() != outputs {
            return Err(Error::InvalidShape(format!("bias has {} entries for {outputs} outputs", bias.len())));
        }
        let weights: Vec<f64> = weights.into_iter().flatten().collect();
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::InvalidShape("non-finite parameter".into()));
        }
        Ok(Layer {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.inputs)
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weight_rows()
                .zip(&self.bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()),
        );
    }
}

/// Which coordinates of the input a forward pass sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputView<'a> {
    Full,
    /// Only the named segment; every other coordinate is zeroed.
    Only(&'a str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    label_vocab: Vec<String>,
    layers: Vec<Layer>,
    segment_map: SegmentMap,
    loss_weights: LossWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients with the same layout as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Flattened in [`MlpModel::parameter`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Individual cross-entropy terms; `None` when the term's weight is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub network: Option<f64>,
    pub content: Option<f64>,
    pub full: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub terms: LossTerms,
    pub gradients: Gradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.01,
            seed: DEFAULT_SEED,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub entity_id: String,
    pub fine: String,
    pub confidence: f64,
}

impl Prediction {
    pub fn to_label(&self) -> LabelRecord {
        LabelRecord::new(&self.entity_id, &self.fine, LabelSource::Predicted)
    }
}

struct Trace {
    /// Input to each layer; `acts[0]` is the (masked) model input.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl MlpModel {
    /// Creates a model with Glorot-uniform weights (bounds `±sqrt(6 / (fan_in + fan_out))`)
    /// and zero biases, drawn from a ChaCha8 stream seeded with `seed`.
    pub fn init(
        input_dim: usize,
        hidden_dims: &[usize],
        label_vocab: Vec<String>,
        segment_map: SegmentMap,
        loss_weights: LossWeights,
        seed: u64,
    ) -> Result<Self> {
        let mut model = MlpModel::zeros(input_dim, hidden_dims, label_vocab, segment_map, loss_weights)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// All parameters zero; every input maps to the uniform distribution.
    pub fn zeros(
        input_dim: usize,
        hidden_dims: &[usize],
        label_vocab: Vec<String>,
        segment_map: SegmentMap,
        loss_weights: LossWeights,
    ) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden_dims);
        dims.push(label_vocab.len());
        if dims.contains(&0) {
            return Err(Error::InvalidShape(format!("layer sizes must be positive, got {dims:?}")));
        }
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        MlpModel::from_layers(label_vocab, layers, segment_map, loss_weights)
    }

    pub fn from_layers(
        label_vocab: Vec<String>,
        layers: Vec<Layer>,
        segment_map: SegmentMap,
        loss_weights: LossWeights,
    ) -> Result<Self> {
        loss_weights.validate()?;
        if label_vocab.is_empty() {
            return Err(Error::InvalidShape("label vocabulary is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = label_vocab.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidShape(format!("duplicate label `{dup}`")));
        }
        let Some(first) = layers.first() else {
            return Err(Error::InvalidShape("model has no layers".into()));
        };
        let input_dim = first.inputs;
        if let Some(w) = layers.windows(2).find(|w| w[0].outputs != w[1].inputs) {
            return Err(Error::InvalidShape(format!(
                "layer with {} outputs feeds a layer with {} inputs",
                w[0].outputs, w[1].inputs
            )));
        }
        let last = layers.last().expect("non-empty");
        if last.outputs != label_vocab.len() {
            return Err(Error::InvalidShape(format!(
                "output layer has {} units for {} labels",
                last.outputs,
                label_vocab.len()
            )));
        }
        if segment_map.total_len() != input_dim {
            return Err(Error::InvalidShape(format!(
                "segment map covers {} coordinates, input has {input_dim}",
                segment_map.total_len()
            )));
        }
        let hidden_dims = layers[..layers.len() - 1].iter().map(|l| l.outputs).collect();
        Ok(MlpModel {
            input_dim,
            hidden_dims,
            label_vocab,
            layers,
            segment_map,
            loss_weights,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn label_vocab(&self) -> &[String] {
        &self.label_vocab
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn segment_map(&self) -> &SegmentMap {
        &self.segment_map
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.loss_weights
    }

    pub fn set_loss_weights(&mut self, weights: LossWeights) -> Result<()> {
        weights.validate()?;
        self.loss_weights = weights;
        Ok(())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_vocab.iter().position(|l| l == label)
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if i < layer.weights.len() {
                return (l, false, i);
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return (l, true, i);
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `i`, counting layer by layer (weights row-major, then bias).
    pub fn parameter(&self, i: usize) -> f64 {
        match self.locate(i) {
            (l, false, j) => self.layers[l].weights[j],
            (l, true, j) => self.layers[l].bias[j],
        }
    }

    pub fn set_parameter(&mut self, i: usize, value: f64) {
        match self.locate(i) {
            (l, false, j) => self.layers[l].weights[j] = value,
            (l, true, j) => self.layers[l].bias[j] = value,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch {
                id: "input".into(),
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn masked(&self, x: &[f64], view: InputView<'_>) -> Result<Vec<f64>> {
        match view {
            InputView::Full => Ok(x.to_vec()),
            InputView::Only(name) => {
                let seg = self
                    .segment_map
                    .get(name)
                    .ok_or_else(|| Error::InvalidSegments(format!("model has no `{name}` segment")))?;
                let mut v = vec![0.0; x.len()];
                let range = seg.offset..seg.offset + seg.length;
                v[range.clone()].copy_from_slice(&x[range]);
                Ok(v)
            }
        }
    }

    fn trace(&self, input: Vec<f64>) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(input);
        let mut buf = Vec::new();
        let (last, hidden) = self.layers.split_last().expect("at least one layer");
        for layer in hidden {
            layer.apply(acts.last().expect("non-empty"), &mut buf);
            acts.push(buf.iter().map(|v| v.max(0.0)).collect());
        }
        let mut logits = Vec::new();
        last.apply(acts.last().expect("non-empty"), &mut logits);
        Trace { acts, logits }
    }

    /// Pre-softmax scores for the given view of `x`.
    pub fn logits(&self, x: &[f64], view: InputView<'_>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(self.masked(x, view)?).logits)
    }

    /// Class probabilities for `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_view(x, InputView::Full)
    }

    pub fn forward_view(&self, x: &[f64], view: InputView<'_>) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x, view)?))
    }

    /// Cross-entropy of one view, optionally accumulating `scale`-weighted gradients.
    fn term(&self, x: &[f64], y: usize, view: InputView<'_>, scale: f64, grads: Option<&mut Gradients>) -> Result<f64> {
        let trace = self.trace(self.masked(x, view)?);
        let lse = log_sum_exp(&trace.logits);
        let loss = lse - trace.logits[y];
        if let Some(grads) = grads {
            let mut delta: Vec<f64> = trace.logits.iter().map(|z| (z - lse).exp()).collect();
            delta[y] -= 1.0;
            self.backward(&trace, delta, scale, grads);
        }
        Ok(loss)
    }

    fn backward(&self, trace: &Trace, mut delta: Vec<f64>, scale: f64, grads: &mut Gradients) {
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                let d = scale * d;
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, a)| *gw += d * a);
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (row, d) in layer.weight_rows().zip(&delta) {
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
            }
            // rectifier derivative, taken as 0 at 0
            prev.iter_mut().zip(input).for_each(|(p, a)| {
                if *a <= 0.0 {
                    *p = 0.0
                }
            });
            delta = prev;
        }
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.label_vocab.len() {
            return Err(Error::UnknownLabel {
                index: y,
                size: self.label_vocab.len(),
            });
        }
        Ok(())
    }

    fn composite(&self, x: &[f64], y: usize, mut grads: Option<&mut Gradients>) -> Result<(f64, LossTerms)> {
        self.check_input(x)?;
        self.check_label(y)?;
        let w = self.loss_weights;
        let mut terms = LossTerms::default();
        let mut loss = 0.0;
        if w.alpha > 0.0 {
            let l = self.term(x, y, InputView::Only(NETWORK_SEGMENT), w.alpha, grads.as_deref_mut())?;
            loss += w.alpha * l;
            terms.network = Some(l);
        }
        if w.beta > 0.0 {
            let l = self.term(x, y, InputView::Only(CONTENT_SEGMENT), w.beta, grads.as_deref_mut())?;
            loss += w.beta * l;
            terms.content = Some(l);
        }
        if w.gamma > 0.0 {
            let l = self.term(x, y, InputView::Full, w.gamma, grads)?;
            loss += w.gamma * l;
            terms.full = Some(l);
        }
        Ok((loss, terms))
    }

    /// Composite loss for one example and its exact gradient.
    pub fn composite_loss(&self, x: &[f64], y: usize) -> Result<LossOutput> {
        let mut gradients = Gradients::zeros_like(self);
        let (loss, terms) = self.composite(x, y, Some(&mut gradients))?;
        Ok(LossOutput { loss, terms, gradients })
    }

    /// Composite loss without gradients.
    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        Ok(self.composite(x, y, None)?.0)
    }

    /// Cross-entropy of a single view, ignoring the loss weights.
    pub fn cross_entropy(&self, x: &[f64], y: usize, view: InputView<'_>) -> Result<f64> {
        self.check_input(x)?;
        self.check_label(y)?;
        self.term(x, y, view, 1.0, None)
    }

    fn apply_gradients(&mut self, grads: &Gradients, step: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= step * d);
            layer.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= step * d);
        }
    }

    /// Index and probability of the most likely label; ties go to the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<(usize, f64)> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Serializes with every real number written to 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_VERSION,
            input_dim: self.input_dim,
            hidden_dims: self.hidden_dims.clone(),
            label_vocab: self.label_vocab.clone(),
            segment_map: self.segment_map.clone(),
            loss_weights: self.loss_weights,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weight_rows().map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
        file.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        match value.get("version") {
            Some(v) if v.as_u64() == Some(MODEL_VERSION as u64) => {}
            Some(v) => {
                return Err(Error::ModelVersion {
                    found: v.to_string(),
                    expected: MODEL_VERSION,
                })
            }
            None => return Err(Error::ModelFormat("missing `version`".into())),
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| Layer::new(l.weights, l.bias))
            .collect::<Result<Vec<_>>>()?;
        let model = MlpModel::from_layers(file.label_vocab, layers, file.segment_map, file.loss_weights)?;
        if model.input_dim != file.input_dim || model.hidden_dims != file.hidden_dims {
            return Err(Error::InvalidShape("declared dimensions disagree with the layers".into()));
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    input_dim: usize,
    hidden_dims: Vec<usize>,
    label_vocab: Vec<String>,
    segment_map: SegmentMap,
    loss_weights: LossWeights,
    layers: Vec<LayerFile>,
}

struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| (z - lse).exp()).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// First index holding the maximum value.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Mini-batch SGD on the composite loss.
///
/// Each batch step uses the mean gradient over the batch. The returned history
/// holds the mean per-example loss of every epoch, measured as the batches
/// were visited.
pub fn train(mut model: MlpModel, data: &[Example], config: &TrainConfig) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    for ex in data {
        model.check_input(&ex.features)?;
        model.check_label(ex.label)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            for &i in idx {
                let ex = &data[i];
                let (loss, _) = model.composite(&ex.features, ex.label, Some(&mut grads))?;
                batch_loss += loss;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            model.apply_gradients(&grads, config.learning_rate / idx.len() as f64);
        }
        let mean = epoch_loss / data.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        history.push(mean);
    }
    Ok((model, history))
}

/// Argmax label for every entity in `set`, in set order.
pub fn predict(model: &MlpModel, set: &EmbeddingSet) -> Result<Vec<Prediction>> {
    if set.dim() != model.input_dim {
        return Err(Error::DimMismatch {
            id: "embedding set".into(),
            expected: model.input_dim,
            actual: set.dim(),
        });
    }
    (0..set.len())
        .into_par_iter()
        .map(|i| {
            let (label, confidence) = model.classify(set.row(i))?;
            Ok(Prediction {
                entity_id: set.ids()[i].clone(),
                fine: model.label_vocab[label].clone(),
                confidence,
            })
        })
        .collect()
}

/// Sorted distinct fine labels.
pub fn label_vocab(labels: &[LabelRecord]) -> Vec<String> {
    let set: std::collections::BTreeSet<&str> = labels.iter().map(|l| l.fine.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub examples: Vec<Example>,
    pub entity_ids: Vec<String>,
    /// Labels whose entity has no vector.
    pub missing: Vec<String>,
}

/// Pairs labels with their entity vectors. Labels outside `vocab` are an error.
pub fn labeled_examples(set: &EmbeddingSet, labels: &[LabelRecord], vocab: &[String]) -> Result<LabeledData> {
    let mut out = LabeledData {
        examples: Vec::new(),
        entity_ids: Vec::new(),
        missing: Vec::new(),
    };
    for l in labels {
        let label = vocab
            .iter()
            .position(|v| *v == l.fine)
            .ok_or_else(|| Error::UnknownType(l.fine.clone()))?;
        match set.get(&l.entity_id) {
            Some(v) => {
                out.examples.push(Example {
                    features: v.to_vec(),
                    label,
                });
                out.entity_ids.push(l.entity_id.clone());
            }
            None => out.missing.push(l.entity_id.clone()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub weights: LossWeights,
    pub weighted_f1: f64,
}

/// Trains one model per (alpha, beta, gamma) combination from `grid` and scores
/// each on `validation` by weighted F1, best first.
pub fn sweep_loss_weights(
    template: &MlpModel,
    grid: &[f64],
    train_set: &[Example],
    validation: &[Example],
    config: &TrainConfig,
) -> Result<Vec<SweepResult>> {
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    let mut out = Vec::new();
    for &alpha in grid {
        for &beta in grid {
            for &gamma in grid {
                let Ok(weights) = LossWeights::new(alpha, beta, gamma) else {
                    continue;
                };
                let mut model = template.clone();
                model.set_loss_weights(weights)?;
                let (model, _) = train(model, train_set, config)?;
                let pairs = validation
                    .iter()
                    .map(|ex| Ok((ex.label, model.classify(&ex.features)?.0)))
                    .collect::<Result<Vec<_>>>()?;
                let cm = crate::eval::ConfusionMatrix::from_indices(model.label_vocab.clone(), &pairs)?;
                let report = crate::eval::metrics(&cm)?;
                out.push(SweepResult {
                    weights,
                    weighted_f1: report.weighted_f1,
                });
            }
        }
    }
    out.sort_by(|a, b| b.weighted_f1.total_cmp(&a.weighted_f1));
    Ok(out)
}
