//! Python bindings for the `wfprecision` toolkit.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wfprecision::classifiers::{self, ClassifierConfig, ClassifierKind, MatchVector, TrainedModel};
use wfprecision::defenses::{apply_defense, DefenseConfig};
use wfprecision::distances;
use wfprecision::harness::{self, ExperimentConfig};
use wfprecision::metrics::{self, ConfusionCounts};
use wfprecision::optimizers;
use wfprecision::traces::{self, Direction, Label};

fn py_err(e: wfprecision::Error) -> PyErr {
    match e {
        wfprecision::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for wfprecision::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_directions(text: &str) -> PyResult<Vec<Direction>> {
    text.chars()
        .map(|c| match c {
            'O' | 'o' | '+' => Ok(Direction::Out),
            'I' | 'i' | '-' => Ok(Direction::In),
            _ => Err(PyValueError::new_err(format!("direction `{c}` is not O or I"))),
        })
        .collect()
}

/// A trace of (time, direction) cells.
#[pyclass(name = "PacketSequence", module = "wfprecision_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPacketSequence(traces::PacketSequence);

#[pymethods]
impl PyPacketSequence {
    /// `directions` holds +1 (outgoing) or -1 (incoming) per cell.
    #[new]
    fn new(times: Vec<f64>, directions: Vec<i32>) -> PyResult<Self> {
        let dirs = directions
            .iter()
            .map(|&d| match d {
                1 => Ok(Direction::Out),
                -1 => Ok(Direction::In),
                _ => Err(PyValueError::new_err(format!("direction {d} is not +1 or -1"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self(traces::PacketSequence::from_parts(&times, &dirs).py()?))
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self(traces::parse_trace(text).py()?))
    }

    fn to_text(&self) -> String {
        traces::serialize_trace(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.cells().iter().map(|c| c.time).collect()
    }

    #[getter]
    fn directions(&self) -> Vec<i32> {
        self.0.directions().map(|d| d.sign() as i32).collect()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.duration()
    }

    fn __repr__(&self) -> String {
        format!("PacketSequence(cells={}, duration={})", self.0.len(), self.0.duration())
    }
}

/// Monitored pages plus unmonitored traces.
#[pyclass(name = "Dataset", module = "wfprecision_py", frozen)]
struct PyDataset(traces::Dataset);

#[pymethods]
impl PyDataset {
    /// Synthetic dataset of shape `AxB+C`.
    #[staticmethod]
    #[pyo3(signature = (spec, seed=0))]
    fn synth(py: Python<'_>, spec: &str, seed: u64) -> PyResult<Self> {
        let spec = traces::parse_spec(spec).py()?;
        Ok(Self(py.detach(|| harness::synth_dataset(&spec, seed)).py()?))
    }

    #[staticmethod]
    #[pyo3(signature = (path, dedup_hosts=false))]
    fn load(path: PathBuf, dedup_hosts: bool) -> PyResult<Self> {
        Ok(Self(traces::load_dataset_dir(&path, dedup_hosts).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        traces::write_dataset_dir(&self.0, &path).py()
    }

    #[getter]
    fn shape(&self) -> String {
        self.0.shape().to_string()
    }

    #[getter]
    fn n_pages(&self) -> usize {
        self.0.n_pages()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(label, trace)` pairs; label is a page id or None for unmonitored.
    fn elements(&self) -> Vec<(Option<u32>, PyPacketSequence)> {
        self.0
            .elements()
            .map(|(l, s)| {
                let page = match l {
                    Label::Monitored(p) => Some(p),
                    Label::NonMonitored => None,
                };
                (page, PyPacketSequence(s.clone()))
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({})", self.0.shape())
    }
}

fn label_text(l: Label) -> String {
    l.to_string()
}

/// A trained classifier.
#[pyclass(name = "Model", module = "wfprecision_py", frozen)]
struct PyModel(TrainedModel);

#[pymethods]
impl PyModel {
    /// Trains `kind` (e.g. "Wa-kNN") on a dataset. `config` is an optional
    /// experiment config text whose classifier keys are used.
    #[staticmethod]
    #[pyo3(signature = (kind, dataset, seed=0, config=None))]
    fn train(py: Python<'_>, kind: &str, dataset: &PyDataset, seed: u64, config: Option<&str>) -> PyResult<Self> {
        let kind: ClassifierKind = kind.parse().py()?;
        let mut cfg = match config {
            Some(text) => ExperimentConfig::from_kv(text).py()?.classifier_config(0),
            None => ClassifierConfig::default(),
        };
        cfg.seed = seed;
        let data = &dataset.0;
        Ok(Self(py.detach(|| classifiers::train(kind, data, &cfg)).py()?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(TrainedModel::load(&path).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).py()
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self(TrainedModel::from_bytes(data).py()?))
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().name()
    }

    #[getter]
    fn roster(&self) -> Vec<String> {
        self.0.roster().iter().copied().map(label_text).collect()
    }

    /// Trees for the forest, class pairs for the SVM kinds.
    #[getter]
    fn unit_count(&self) -> usize {
        self.0.unit_count()
    }

    /// Match scores in roster order.
    fn match_scores(&self, seq: &PyPacketSequence) -> Vec<f64> {
        self.0.match_sequence(&seq.0).scores
    }

    fn classify(&self, seq: &PyPacketSequence) -> String {
        label_text(self.0.classify(&seq.0))
    }

    /// Classification after the confidence optimizer: the page id as text,
    /// "nonmon" for rejections and unmonitored decisions.
    fn classify_confident(&self, seq: &PyPacketSequence, k: usize, m_match: f64) -> PyResult<String> {
        let m = self.0.match_sequence(&seq.0);
        let top = m.top();
        if !top.is_monitored() {
            return Ok(label_text(top));
        }
        let scaled = optimizers::scale_matches(&m).py()?;
        Ok(label_text(optimizers::confidence_po(&scaled, k, m_match).py()?.label()))
    }
}

/// `R_TP / (R_TP + R_WP + r R_FP)`, or None when nothing is positive.
#[pyfunction]
fn r_precision(tp: f64, wp: f64, fp: f64, r: f64) -> Option<f64> {
    metrics::r_precision(tp, wp, fp, r)
}

#[pyfunction]
#[pyo3(signature = (x, n, z=metrics::Z95))]
fn wald_halfwidth(x: f64, n: u64, z: f64) -> PyResult<f64> {
    metrics::wald_halfwidth_z(x, n, z).py()
}

#[pyfunction]
#[pyo3(signature = (x, n, z=metrics::Z95))]
fn wilson_upper(x: f64, n: u64, z: f64) -> PyResult<f64> {
    metrics::wilson_upper_z(x, n, z).py()
}

/// Point estimate and bounds from counts. Absent values are None and their
/// reasons appear under `absent`.
#[pyfunction]
#[pyo3(signature = (n_p, n_n, n_tp, n_wp, n_fp, r, z=metrics::Z95))]
#[allow(clippy::too_many_arguments)]
fn precision_estimate<'py>(
    py: Python<'py>,
    n_p: u64,
    n_n: u64,
    n_tp: u64,
    n_wp: u64,
    n_fp: u64,
    r: f64,
    z: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let counts = ConfusionCounts { n_p, n_n, n_tp, n_wp, n_fp };
    if !counts.is_valid() {
        return Err(PyValueError::new_err("counts exceed their populations"));
    }
    let e = metrics::precision_estimate_z(&counts, r, z);
    let d = PyDict::new(py);
    d.set_item("r", r)?;
    d.set_item("method", e.method.to_string())?;
    let absent = PyDict::new(py);
    for (key, v) in [("point", e.point), ("lower", e.lower), ("upper", e.upper)] {
        match v {
            Ok(x) => d.set_item(key, x)?,
            Err(a) => {
                d.set_item(key, py.None())?;
                absent.set_item(key, a.to_string())?;
            }
        }
    }
    d.set_item("absent", absent)?;
    d.set_item("recall", e.rates.recall())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (tp_grid, n_p, n_n, r=1000.0))]
fn bound_curve(tp_grid: Vec<f64>, n_p: u64, n_n: u64, r: f64) -> PyResult<Vec<(f64, f64)>> {
    metrics::bound_curve(&tp_grid, n_p, n_n, r).py()
}

/// Optimal string alignment distance between two strings over {O, I}.
#[pyfunction]
fn osa(a: &str, b: &str) -> PyResult<usize> {
    Ok(distances::osa(&parse_directions(a)?, &parse_directions(b)?))
}

/// Confidence optimizer on raw scores. `labels` are page ids as text or
/// "nonmon", sorted the way a model roster is. Returns the accepted label
/// or "reject".
#[pyfunction]
fn confidence_po(labels: Vec<String>, scores: Vec<f64>, k: usize, m_match: f64) -> PyResult<String> {
    let labels = labels.iter().map(|l| l.parse::<Label>()).collect::<wfprecision::Result<Vec<_>>>().py()?;
    let mv = MatchVector::new(labels, scores).py()?;
    let scaled = optimizers::scale_matches(&mv).py()?;
    Ok(match optimizers::confidence_po(&scaled, k, m_match).py()? {
        optimizers::PoDecision::Accept(l) => label_text(l),
        optimizers::PoDecision::Reject => "reject".into(),
    })
}

/// Applies a defense described by a `key = value` config text.
#[pyfunction]
#[pyo3(signature = (seq, config, seed=0))]
fn defend(seq: &PyPacketSequence, config: &str, seed: u64) -> PyResult<PyPacketSequence> {
    let cfg = DefenseConfig::from_kv(config).py()?;
    Ok(PyPacketSequence(apply_defense(&seq.0, &cfg, seed).py()?))
}

/// Runs a full sweep and returns one dict per result row.
#[pyfunction]
#[pyo3(signature = (config, dataset=None))]
fn run_experiment<'py>(py: Python<'py>, config: &str, dataset: Option<&PyDataset>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_kv(config).py()?;
    let records = py
        .detach(|| -> wfprecision::Result<_> {
            let owned;
            let data = match dataset {
                Some(d) => &d.0,
                None => {
                    owned = cfg.load_dataset()?;
                    &owned
                }
            };
            Ok(harness::run_experiment(&cfg, data)?.records(&cfg))
        })
        .py()?;
    records
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("classifier", r.classifier)?;
            d.set_item("po", r.po)?;
            d.set_item("params", r.params)?;
            d.set_item("r", r.r)?;
            d.set_item("n_p", r.n_p)?;
            d.set_item("n_n", r.n_n)?;
            d.set_item("n_tp", r.n_tp)?;
            d.set_item("n_wp", r.n_wp)?;
            d.set_item("n_fp", r.n_fp)?;
            d.set_item("method", r.method)?;
            d.set_item("point", harness::parse_value(&r.point))?;
            d.set_item("lower", harness::parse_value(&r.lower))?;
            d.set_item("upper", harness::parse_value(&r.upper))?;
            d.set_item("admissible", r.admissible)?;
            d.set_item("best", r.best)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn wfprecision_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPacketSequence>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(r_precision, m)?)?;
    m.add_function(wrap_pyfunction!(wald_halfwidth, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_upper, m)?)?;
    m.add_function(wrap_pyfunction!(precision_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(bound_curve, m)?)?;
    m.add_function(wrap_pyfunction!(osa, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_po, m)?)?;
    m.add_function(wrap_pyfunction!(defend, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("CLASSIFIERS", ClassifierKind::ALL.map(|k| k.name()).to_vec())?;
    Ok(())
}
