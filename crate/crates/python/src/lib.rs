//! Python bindings: embeddings, schema induction, the classifier, metrics and search.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use socialtyper::classifier::{self, Example, LossWeights, MlpModel, TrainConfig};
use socialtyper::embedstore::{self, EmbeddingSet, SegmentMap};
use socialtyper::eval::{self, ConfusionMatrix, MacroAveraging};
use socialtyper::ontology::{self, TypePath, TypeSchema};
use socialtyper::{simsearch, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "EmbeddingSet", module = "socialtyper")]
struct PyEmbeddingSet {
    inner: EmbeddingSet,
}

#[pymethods]
impl PyEmbeddingSet {
    #[new]
    #[pyo3(signature = (dim, rows = None))]
    fn new(dim: usize, rows: Option<Vec<(String, Vec<f64>)>>) -> PyResult<Self> {
        let inner = EmbeddingSet::from_pairs(dim, rows.unwrap_or_default()).map_err(err)?;
        Ok(Self { inner })
    }

    /// Reads EMB1, or the text format when the name ends in `.etsv`.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: embedstore::read_embeddings(path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        embedstore::write_embeddings(&self.inner, path).map_err(err)
    }

    #[staticmethod]
    fn from_emb1(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: EmbeddingSet::from_emb1(data).map_err(err)?,
        })
    }

    fn to_emb1<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.inner.to_emb1().map_err(err)?))
    }

    fn insert(&mut self, id: String, vector: Vec<f64>) -> PyResult<()> {
        self.inner.insert(id, vector).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    fn get(&self, id: &str) -> Option<Vec<f64>> {
        self.inner.get(id).map(<[f64]>::to_vec)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, id: &str) -> bool {
        self.inner.contains(id)
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingSet(dim={}, len={})", self.inner.dim(), self.inner.len())
    }
}

#[pyclass(name = "Schema", module = "socialtyper")]
struct PySchema {
    inner: TypeSchema,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: TypeSchema::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TypeSchema::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    /// `(fine, coarse)` pairs sorted by fine name.
    fn fine_types(&self) -> Vec<(String, String)> {
        self.inner
            .fine_types
            .iter()
            .map(|f| (f.name.clone(), f.coarse.to_string()))
            .collect()
    }

    fn coarse_of(&self, fine: &str) -> PyResult<String> {
        Ok(self.inner.coarse_of(fine).map_err(err)?.to_string())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Induces a schema from `(path, count)` pairs such as `("Thing/Agent/Person/Actor", 12)`.
#[pyfunction]
#[pyo3(signature = (paths, depth_cutoff = ontology::DEFAULT_DEPTH_CUTOFF, min_count = ontology::DEFAULT_MIN_COUNT))]
fn induce_schema(paths: Vec<(String, u64)>, depth_cutoff: usize, min_count: u64) -> PyResult<PySchema> {
    let parsed = paths
        .iter()
        .map(|(p, c)| Ok((p.parse::<TypePath>()?, *c)))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(err)?;
    let inner =
        ontology::induce_schema(&parsed, depth_cutoff, min_count, &ontology::default_coarse_roots()).map_err(err)?;
    Ok(PySchema { inner })
}

/// Mean vector per entity from `(entity_id, vector)` items.
#[pyfunction]
fn aggregate_mean(items: Vec<(String, Vec<f64>)>) -> PyResult<PyEmbeddingSet> {
    Ok(PyEmbeddingSet {
        inner: embedstore::aggregate_mean(&items).map_err(err)?,
    })
}

/// Concatenates named spaces; returns the fused set and `(name, offset, length)` segments.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn fuse(parts: Vec<(String, PyRef<'_, PyEmbeddingSet>)>) -> PyResult<(PyEmbeddingSet, Vec<(String, usize, usize)>)> {
    let refs: Vec<(&str, &EmbeddingSet)> = parts.iter().map(|(n, s)| (n.as_str(), &s.inner)).collect();
    let (inner, map) = embedstore::fuse(&refs).map_err(err)?;
    let segments = map.segments().iter().map(|s| (s.name.clone(), s.offset, s.length)).collect();
    Ok((PyEmbeddingSet { inner }, segments))
}

#[pyclass(name = "Model", module = "socialtyper")]
struct PyModel {
    inner: MlpModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (labels, segments, hidden = vec![50], alpha = 5.0, beta = 1.0, gamma = 1.0, seed = socialtyper::DEFAULT_SEED))]
    fn new(
        labels: Vec<String>,
        segments: Vec<(String, usize)>,
        hidden: Vec<usize>,
        alpha: f64,
        beta: f64,
        gamma: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let map = SegmentMap::from_lengths(segments).map_err(err)?;
        let weights = LossWeights::new(alpha, beta, gamma).map_err(err)?;
        let inner = MlpModel::init(map.total_len(), &hidden, labels, map, weights, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.label_vocab().to_vec()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(err)
    }

    fn classify(&self, x: Vec<f64>) -> PyResult<(String, f64)> {
        let (i, p) = self.inner.classify(&x).map_err(err)?;
        Ok((self.inner.label_vocab()[i].clone(), p))
    }

    /// Total weighted loss and the individual active terms.
    fn composite_loss(&self, x: Vec<f64>, label: &str) -> PyResult<(f64, HashMap<&'static str, f64>)> {
        let y = self.index(label)?;
        let out = self.inner.composite_loss(&x, y).map_err(err)?;
        let terms = [("network", out.terms.network), ("content", out.terms.content), ("full", out.terms.full)]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect();
        Ok((out.loss, terms))
    }

    /// Trains in place and returns the per-epoch mean loss.
    #[pyo3(signature = (features, labels, epochs = 50, batch_size = 32, learning_rate = 0.01, seed = socialtyper::DEFAULT_SEED, shuffle = true))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
        shuffle: bool,
    ) -> PyResult<Vec<f64>> {
        if features.len() != labels.len() {
            return Err(PyValueError::new_err("features and labels differ in length"));
        }
        let examples = features
            .into_iter()
            .zip(&labels)
            .map(|(features, l)| Ok(Example { features, label: self.index(l)? }))
            .collect::<PyResult<Vec<_>>>()?;
        let config = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            shuffle,
        };
        let model = self.inner.clone();
        let (trained, history) = py.detach(|| classifier::train(model, &examples, &config)).map_err(err)?;
        self.inner = trained;
        Ok(history)
    }

    /// `(entity_id, label, confidence)` for every entity in `set`.
    fn predict(&self, py: Python<'_>, set: &PyEmbeddingSet) -> PyResult<Vec<(String, String, f64)>> {
        let preds = py.detach(|| classifier::predict(&self.inner, &set.inner)).map_err(err)?;
        Ok(preds.into_iter().map(|p| (p.entity_id, p.fine, p.confidence)).collect())
    }
}

impl PyModel {
    fn index(&self, label: &str) -> PyResult<usize> {
        self.inner
            .label_index(label)
            .ok_or_else(|| PyValueError::new_err(format!("unknown label `{label}`")))
    }
}

/// Accuracy, macro/weighted F1 and per-class scores for parallel label lists.
#[pyfunction]
#[pyo3(signature = (gold, predicted, gold_only = false))]
fn metrics<'py>(py: Python<'py>, gold: Vec<String>, predicted: Vec<String>, gold_only: bool) -> PyResult<Bound<'py, PyDict>> {
    if gold.len() != predicted.len() {
        return Err(PyValueError::new_err("gold and predicted differ in length"));
    }
    let mut vocab: Vec<String> = gold.iter().chain(&predicted).cloned().collect();
    vocab.sort();
    vocab.dedup();
    let at = |l: &String| vocab.binary_search(l).expect("label in vocabulary");
    let pairs: Vec<(usize, usize)> = gold.iter().zip(&predicted).map(|(g, p)| (at(g), at(p))).collect();
    let averaging = if gold_only { MacroAveraging::GoldOnly } else { MacroAveraging::GoldOrPredicted };
    let cm = ConfusionMatrix::from_indices(vocab.clone(), &pairs).map_err(err)?;
    let report = eval::metrics_with(&cm, averaging).map_err(err)?;

    let out = PyDict::new(py);
    out.set_item("accuracy", report.accuracy)?;
    out.set_item("macro_f1", report.macro_f1)?;
    out.set_item("weighted_f1", report.weighted_f1)?;
    let per_class = PyDict::new(py);
    for c in &report.per_class {
        let row = PyDict::new(py);
        row.set_item("precision", c.precision)?;
        row.set_item("recall", c.recall)?;
        row.set_item("f1", c.f1)?;
        row.set_item("support", c.support)?;
        per_class.set_item(&c.label, row)?;
    }
    out.set_item("per_class", per_class)?;
    Ok(out)
}

#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    simsearch::cosine(&u, &v).map_err(err)
}

/// The `k` most cosine-similar entities to `query`.
#[pyfunction]
#[pyo3(signature = (query, set, k = simsearch::DEFAULT_K))]
fn topk(py: Python<'_>, query: &str, set: &PyEmbeddingSet, k: usize) -> PyResult<Vec<(String, f64)>> {
    let list = py.detach(|| simsearch::topk(query, &set.inner, k)).map_err(err)?;
    Ok(list.entries.into_iter().map(|r| (r.entity_id, r.score)).collect())
}

/// Top `k` in `first`, reordered by cosine in `second`.
#[pyfunction]
#[pyo3(signature = (query, first, second, k = simsearch::DEFAULT_K))]
fn rerank(
    py: Python<'_>,
    query: &str,
    first: &PyEmbeddingSet,
    second: &PyEmbeddingSet,
    k: usize,
) -> PyResult<Vec<(String, f64)>> {
    let r = py.detach(|| simsearch::rerank(query, &first.inner, &second.inner, k)).map_err(err)?;
    Ok(r.list.entries.into_iter().map(|r| (r.entity_id, r.score)).collect())
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEmbeddingSet>()?;
    m.add_class::<PySchema>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(induce_schema, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_mean, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(topk, m)?)?;
    m.add_function(wrap_pyfunction!(rerank, m)?)?;
    Ok(())
}
