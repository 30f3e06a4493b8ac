//! Python bindings for the qfsru pipeline.
//!
//! Vectors cross the boundary as lists of floats. Training options are
//! passed as a dict with the same keys as the JSON config sidecar
//! (`epochs`, `lr0`, `proj_dim`, `fusion_mode`, ...).

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qfsru::classifier::{self, FeaturePipeline, FocalParams, ModelParams, TrainConfig};
use qfsru::data::{self, Format, KnowledgeEntry, Sample, SampleSet, SynthConfig};
use qfsru::evaluation::{self, ConfusionMatrix};
use qfsru::retrieval;
use qfsru::spectral;
use qfsru::{Error, ErrorKind};

fn to_py(e: Error) -> PyErr {
    match (&e, e.kind()) {
        (Error::Io(_), _) => PyOSError::new_err(e.to_string()),
        (_, ErrorKind::Numeric) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for qfsru::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn format_for(path: &str, format: Option<&str>) -> PyResult<Format> {
    match format {
        Some(f) => parse(f),
        None => Ok(Format::from_path(std::path::Path::new(path))),
    }
}

/// JSON text to Python objects via the standard `json` module.
fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn train_config(py: Python<'_>, options: Option<&Bound<'_, PyDict>>) -> PyResult<TrainConfig> {
    let Some(options) = options else {
        return Ok(TrainConfig::default());
    };
    let defaults = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    for key in options.keys() {
        let key: String = key.extract()?;
        if defaults.get(&key).is_none() {
            return Err(PyKeyError::new_err(format!("unknown training option {key:?}")));
        }
    }
    let text: String = py
        .import("json")?
        .call_method1("dumps", (options,))?
        .extract()?;
    let cfg: TrainConfig =
        serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().py()?;
    Ok(cfg)
}

/// A labelled set of text/image embedding pairs.
#[pyclass(name = "Dataset", module = "pyqfsru")]
struct PyDataset {
    inner: SampleSet,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(
        ids: Vec<String>,
        labels: Vec<u8>,
        text: Vec<Vec<f32>>,
        image: Vec<Vec<f32>>,
    ) -> PyResult<Self> {
        if ids.len() != labels.len() || ids.len() != text.len() || ids.len() != image.len() {
            return Err(PyValueError::new_err("ids, labels, text and image must have equal lengths"));
        }
        let d_t = text.first().map_or(0, Vec::len);
        let d_v = image.first().map_or(0, Vec::len);
        let samples = ids
            .into_iter()
            .zip(labels)
            .zip(text.into_iter().zip(image))
            .map(|((id, label), (text_emb, image_emb))| Sample {
                id,
                label,
                text_emb,
                image_emb,
            })
            .collect();
        let inner = SampleSet { d_t, d_v, samples };
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let fmt = format_for(&path.to_string_lossy(), format)?;
        Ok(Self {
            inner: data::read_dataset(&path, fmt).py()?,
        })
    }

    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let fmt = format_for(&path.to_string_lossy(), format)?;
        data::write_dataset(&self.inner, &path, fmt).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn d_t(&self) -> usize {
        self.inner.d_t
    }

    #[getter]
    fn d_v(&self) -> usize {
        self.inner.d_v
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.samples.iter().map(|s| s.id.clone()).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    fn text_embedding(&self, i: usize) -> PyResult<Vec<f32>> {
        self.sample(i).map(|s| s.text_emb.clone())
    }

    fn image_embedding(&self, i: usize) -> PyResult<Vec<f32>> {
        self.sample(i).map(|s| s.image_emb.clone())
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.inner.len()) {
            return Err(PyValueError::new_err(format!("index {i} out of range")));
        }
        Ok(Self {
            inner: self.inner.subset(&indices),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, d_t={}, d_v={})",
            self.inner.len(),
            self.inner.d_t,
            self.inner.d_v
        )
    }
}

impl PyDataset {
    fn sample(&self, i: usize) -> PyResult<&Sample> {
        self.inner
            .samples
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("index {i} out of range")))
    }
}

/// Knowledge entries with embedding keys.
#[pyclass(name = "KnowledgeBase", module = "pyqfsru")]
struct PyKnowledgeBase {
    inner: data::KnowledgeBase,
}

#[pymethods]
impl PyKnowledgeBase {
    #[new]
    fn new(ids: Vec<String>, keys: Vec<Vec<f32>>, payloads: Vec<String>) -> PyResult<Self> {
        if ids.len() != keys.len() || ids.len() != payloads.len() {
            return Err(PyValueError::new_err("ids, keys and payloads must have equal lengths"));
        }
        let d_k = keys.first().map_or(0, Vec::len);
        let entries = ids
            .into_iter()
            .zip(keys)
            .zip(payloads)
            .map(|((id, key_emb), payload)| KnowledgeEntry {
                id,
                key_emb,
                payload,
            })
            .collect();
        let inner = data::KnowledgeBase { d_k, entries };
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let fmt = format_for(&path.to_string_lossy(), format)?;
        Ok(Self {
            inner: data::read_knowledge_base(&path, fmt).py()?,
        })
    }

    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let fmt = format_for(&path.to_string_lossy(), format)?;
        data::write_knowledge_base(&self.inner, &path, fmt).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn d_k(&self) -> usize {
        self.inner.d_k
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.entries.iter().map(|e| e.id.clone()).collect()
    }

    #[getter]
    fn payloads(&self) -> Vec<String> {
        self.inner.entries.iter().map(|e| e.payload.clone()).collect()
    }

    /// `(index, score)` pairs, best first.
    #[pyo3(signature = (query, k=5, metric="quantum"))]
    fn top_k(&self, query: Vec<f64>, k: usize, metric: &str) -> PyResult<Vec<(usize, f64)>> {
        let hits = retrieval::top_k(&query, &self.inner, k, parse(metric)?).py()?;
        Ok(hits.into_iter().map(|h| (h.index, h.score)).collect())
    }

    /// Weighted mean of the top-k keys.
    #[pyo3(signature = (query, k=5, metric="quantum", weighting="uniform"))]
    fn context(&self, query: Vec<f64>, k: usize, metric: &str, weighting: &str) -> PyResult<Vec<f64>> {
        let hits = retrieval::top_k(&query, &self.inner, k, parse(metric)?).py()?;
        Ok(retrieval::topk_avg(&self.inner, &hits, parse(weighting)?).py()?.k_agg)
    }

    fn __repr__(&self) -> String {
        format!("KnowledgeBase(n={}, d_k={})", self.inner.len(), self.inner.d_k)
    }
}

/// Trained parameters together with the config that produced them.
#[pyclass(name = "Model", module = "pyqfsru")]
struct PyModel {
    params: ModelParams,
    config: TrainConfig,
    history: Option<String>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (params, config) = classifier::load_model(&path).py()?;
        Ok(Self {
            params,
            config,
            history: None,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        classifier::save_model(&path, &self.params, &self.config).py()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &serde_json::to_string(&self.config).expect("config serializes"))
    }

    /// Per-epoch statistics, or None for a loaded checkpoint.
    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.history.as_deref().map(|h| json_to_py(py, h)).transpose()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Class-1 probability for every sample.
    fn predict_proba(&self, dataset: &PyDataset, kb: &PyKnowledgeBase) -> PyResult<Vec<f64>> {
        let set = &dataset.inner;
        let pipeline = FeaturePipeline::new(&kb.inner, &self.config, set.d_t, set.d_v).py()?;
        set.samples
            .iter()
            .map(|s| {
                classifier::predict(&self.params, s, &pipeline, self.config.fusion_mode)
                    .map(|(p1, _)| p1)
                    .py()
            })
            .collect()
    }

    /// Accuracy, precision, recall, F1, ROC-AUC and confusion counts.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        kb: &PyKnowledgeBase,
    ) -> PyResult<Bound<'py, PyAny>> {
        let set = &dataset.inner;
        let pipeline = FeaturePipeline::new(&kb.inner, &self.config, set.d_t, set.d_v).py()?;
        let features = pipeline.features_all(set).py()?;
        let m = evaluation::evaluate(&self.params, &features, &set.labels(), self.config.fusion_mode).py()?;
        json_to_py(py, &serde_json::to_string(&m).expect("metrics serialize"))
    }
}

#[pyfunction]
fn rfft(x: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let s = spectral::rfft(&x).py()?;
    Ok(s.bins().iter().map(|b| (b.re, b.im)).collect())
}

/// Inverse of [`rfft`]; `n` is the signal length.
#[pyfunction]
fn irfft(bins: Vec<(f64, f64)>, n: usize) -> PyResult<Vec<f64>> {
    let bins = bins
        .into_iter()
        .map(|(re, im)| num_complex::Complex64::new(re, im))
        .collect();
    spectral::irfft(&spectral::ComplexSpectrum::new(n, bins).py()?).py()
}

#[pyfunction]
fn power_spectrum(x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(spectral::power_spectrum(&spectral::embedding_spectrum(&x).py()?))
}

#[pyfunction]
fn to_freq_feature(x: Vec<f64>) -> PyResult<Vec<f64>> {
    spectral::to_freq_feature(&x).py()
}

#[pyfunction]
fn quantum_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let a = retrieval::amplitude_encode(&a).py()?;
    let b = retrieval::amplitude_encode(&b).py()?;
    retrieval::quantum_similarity(&a, &b).py()
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    retrieval::cosine_similarity(&a, &b).py()
}

#[pyfunction]
fn amplitude_encode(x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(retrieval::amplitude_encode(&x).py()?.amplitudes().to_vec())
}

#[pyfunction]
#[pyo3(signature = (n=200, sep=8.0, sigma=1.0, d_t=768, d_v=2048, d_k=768, n_knowledge=20, seed=42))]
#[allow(clippy::too_many_arguments)]
fn synth(
    n: usize,
    sep: f64,
    sigma: f64,
    d_t: usize,
    d_v: usize,
    d_k: usize,
    n_knowledge: usize,
    seed: u64,
) -> PyResult<(PyDataset, PyKnowledgeBase)> {
    let cfg = SynthConfig {
        n_samples: n,
        d_t,
        d_v,
        d_k,
        n_knowledge,
        class_separation: sep,
        noise_sigma: sigma,
        seed,
    };
    let (set, kb) = data::synth_dataset(&cfg).py()?;
    Ok((PyDataset { inner: set }, PyKnowledgeBase { inner: kb }))
}

#[pyfunction]
#[pyo3(signature = (dataset, kb, config=None))]
fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    kb: &PyKnowledgeBase,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<PyModel> {
    let cfg = train_config(py, config)?;
    let (set, base) = (dataset.inner.clone(), kb.inner.clone());
    let run_cfg = cfg.clone();
    let (params, history) = py
        .detach(move || classifier::train(&set, &base, &run_cfg))
        .py()?;
    Ok(PyModel {
        params,
        config: cfg,
        history: Some(serde_json::to_string(&history).expect("history serializes")),
    })
}

/// Stratified k-fold cross-validation; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (dataset, kb, folds=5, jobs=1, config=None))]
fn cross_validate<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    kb: &PyKnowledgeBase,
    folds: usize,
    jobs: usize,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = train_config(py, config)?;
    let (set, base) = (dataset.inner.clone(), kb.inner.clone());
    let report = py
        .detach(move || evaluation::cross_validate(&set, &base, &cfg, folds, jobs))
        .py()?;
    json_to_py(py, &serde_json::to_string(&report).expect("report serializes"))
}

/// Precision, recall, F1 and accuracy from confusion counts.
#[pyfunction]
#[pyo3(signature = (tp, tn, fp, fn_, positive_class=1))]
fn prf1<'py>(
    py: Python<'py>,
    tp: usize,
    tn: usize,
    fp: usize,
    fn_: usize,
    positive_class: u8,
) -> PyResult<Bound<'py, PyDict>> {
    if positive_class > 1 {
        return Err(PyValueError::new_err("positive_class must be 0 or 1"));
    }
    let m = evaluation::prf1(&ConfusionMatrix { tp, tn, fp, fn_ }, positive_class);
    let d = PyDict::new(py);
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("f1", m.f1)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("zero_division", m.zero_division)?;
    Ok(d)
}

#[pyfunction]
fn roc_auc(labels: Vec<u8>, scores: Vec<f64>) -> PyResult<f64> {
    evaluation::roc_auc(&labels, &scores).py()
}

/// Fold index (0-based) of every sample.
#[pyfunction]
#[pyo3(signature = (labels, k=5, seed=42))]
fn stratified_folds(labels: Vec<u8>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    Ok(evaluation::stratified_folds(&labels, k, seed).py()?.fold_of)
}

/// `(loss, dloss/dlogits)` for one probability vector.
#[pyfunction]
#[pyo3(signature = (probs, label, gamma=2.0, alpha=None, epsilon=0.1))]
fn focal_loss(
    probs: Vec<f64>,
    label: usize,
    gamma: f64,
    alpha: Option<Vec<f64>>,
    epsilon: f64,
) -> PyResult<(f64, Vec<f64>)> {
    let alpha = alpha.unwrap_or_else(|| vec![1.0; probs.len()]);
    let l = classifier::focal_loss(&probs, label, &FocalParams { gamma, alpha, epsilon }).py()?;
    Ok((l.loss, l.dlogits))
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> Vec<f64> {
    classifier::softmax(&logits)
}

/// Runs the command-line tool in-process; returns its exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> PyResult<i32> {
    let mut argv = vec!["qfsru".to_string()];
    argv.extend(args);
    let (code, out, err) = py.detach(move || {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = qfsru::cli::run(argv, &mut out, &mut err);
        (code, out, err)
    });
    let sys = py.import("sys")?;
    sys.getattr("stdout")?
        .call_method1("write", (String::from_utf8_lossy(&out),))?;
    sys.getattr("stderr")?
        .call_method1("write", (String::from_utf8_lossy(&err),))?;
    Ok(code)
}

#[pymodule]
fn pyqfsru(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyKnowledgeBase>()?;
    m.add_class::<PyModel>()?;
    for f in [
        wrap_pyfunction!(rfft, m)?,
        wrap_pyfunction!(irfft, m)?,
        wrap_pyfunction!(power_spectrum, m)?,
        wrap_pyfunction!(to_freq_feature, m)?,
        wrap_pyfunction!(quantum_similarity, m)?,
        wrap_pyfunction!(cosine_similarity, m)?,
        wrap_pyfunction!(amplitude_encode, m)?,
        wrap_pyfunction!(synth, m)?,
        wrap_pyfunction!(train, m)?,
        wrap_pyfunction!(cross_validate, m)?,
        wrap_pyfunction!(prf1, m)?,
        wrap_pyfunction!(roc_auc, m)?,
        wrap_pyfunction!(stratified_folds, m)?,
        wrap_pyfunction!(focal_loss, m)?,
        wrap_pyfunction!(softmax, m)?,
        wrap_pyfunction!(main, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
