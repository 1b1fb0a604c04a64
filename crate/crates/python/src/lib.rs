//! Python bindings: prediction sets, COC/AUCOC, calibration, OOD AUROC and
//! the AUCOC loss with its gradients.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use cockit::calibration;
use cockit::coc;
use cockit::evaluation::evaluate_predictions;
use cockit::loss::{self, LossBatch};
use cockit::ood::{self, ScoreKind};
use cockit::predictions::{self, Format};
use cockit::trainer::permutation_test as perm_test;
use cockit::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Hand a serializable value to Python as plain dicts and lists.
fn json_value<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Class probabilities (and optionally logits) with ground-truth labels.
#[pyclass(name = "PredictionSet", module = "cockit", frozen)]
struct PyPredictionSet {
    inner: predictions::PredictionSet,
}

#[pymethods]
impl PyPredictionSet {
    #[staticmethod]
    fn from_probs(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        let inner = predictions::PredictionSet::from_probs(rows, labels).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_logits(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        let inner = predictions::PredictionSet::from_logits(rows, labels).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Load a JSONL or CSV prediction file.
    #[staticmethod]
    #[pyo3(signature = (path, logits = false))]
    fn load(path: PathBuf, logits: bool) -> PyResult<Self> {
        let format = Format::from_path(&path);
        let loaded = predictions::load_predictions(&path, Some(format), logits).map_err(to_py)?;
        Ok(Self { inner: loaded.set })
    }

    #[pyo3(signature = (path, logits = false))]
    fn save(&self, path: PathBuf, logits: bool) -> PyResult<()> {
        self.inner.save_jsonl(&path, logits).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn has_logits(&self) -> bool {
        self.inner.has_logits()
    }

    fn accuracy(&self) -> f64 {
        self.inner.accuracy()
    }

    /// `(confidence, true_prob, correct, predicted)` per sample.
    fn records(&self) -> Vec<(f64, f64, bool, usize)> {
        self.inner
            .records()
            .into_iter()
            .map(|r| (r.confidence, r.true_prob, r.correct, r.predicted))
            .collect()
    }

    fn with_temperature(&self, temperature: f64) -> PyResult<Self> {
        let inner = self.inner.with_temperature(temperature).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "PredictionSet(n={}, k={}, logits={})",
            self.inner.len(),
            self.inner.num_classes(),
            self.inner.has_logits()
        )
    }
}

/// Empirical COC curve as `(tau, accuracy, threshold)` points.
#[pyfunction]
fn coc_curve(preds: &PyPredictionSet) -> PyResult<Vec<(f64, f64, f64)>> {
    let curve = coc::empirical_curve(&preds.inner.records()).map_err(to_py)?;
    Ok(curve.points().iter().map(|p| (p.tau, p.accuracy, p.threshold)).collect())
}

#[pyfunction]
fn empirical_aucoc(preds: &PyPredictionSet) -> PyResult<f64> {
    let curve = coc::empirical_curve(&preds.inner.records()).map_err(to_py)?;
    Ok(coc::empirical_aucoc(&curve))
}

/// KDE AUCOC; Scott's-rule bandwidth when none is given.
#[pyfunction]
#[pyo3(signature = (preds, bandwidth = None))]
fn kde_aucoc(preds: &PyPredictionSet, bandwidth: Option<f64>) -> PyResult<f64> {
    let records = preds.inner.records();
    let h = bandwidth.unwrap_or_else(|| {
        let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
        cockit::kde::scott_bandwidth(&conf)
    });
    coc::kde_aucoc(&records, h).map_err(to_py)
}

#[pyfunction]
fn tau_at_accuracy(preds: &PyPredictionSet, target: f64) -> PyResult<Option<f64>> {
    let curve = coc::empirical_curve(&preds.inner.records()).map_err(to_py)?;
    Ok(curve.tau_at_accuracy(target))
}

#[pyfunction]
#[pyo3(signature = (preds, bins = calibration::DEFAULT_BINS))]
fn calibration_report<'py>(py: Python<'py>, preds: &PyPredictionSet, bins: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = calibration::CalibrationReport::compute(&preds.inner, bins).map_err(to_py)?;
    json_value(py, &report)
}

/// Same fields as the `report` command's metric block.
#[pyfunction]
#[pyo3(signature = (preds, bins = calibration::DEFAULT_BINS, targets = vec![0.9, 0.95]))]
fn evaluate<'py>(py: Python<'py>, preds: &PyPredictionSet, bins: usize, targets: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let eval = evaluate_predictions(&preds.inner, bins, &targets).map_err(to_py)?;
    json_value(py, &eval)
}

/// Fit a temperature by NLL; returns `(T, nll_before, nll_after)`.
#[pyfunction]
fn temperature_scale(preds: &PyPredictionSet) -> PyResult<(f64, f64, f64)> {
    let fit = calibration::temperature_scale(&preds.inner).map_err(to_py)?;
    Ok((fit.temperature, fit.nll_before, fit.nll_after))
}

fn parse_score(name: &str) -> PyResult<ScoreKind> {
    ScoreKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown score {name:?}")))
}

#[pyfunction]
#[pyo3(signature = (id_preds, ood_preds, score = "msp", temperature = 1.0))]
fn ood_auroc(id_preds: &PyPredictionSet, ood_preds: &PyPredictionSet, score: &str, temperature: f64) -> PyResult<f64> {
    let kind = parse_score(score)?;
    let a = ood::score_set(&id_preds.inner, kind, temperature).map_err(to_py)?;
    let b = ood::score_set(&ood_preds.inner, kind, temperature).map_err(to_py)?;
    Ok(ood::auroc(&a, &b))
}

#[pyfunction]
fn auroc(scores_id: Vec<f64>, scores_ood: Vec<f64>) -> f64 {
    ood::auroc(&scores_id, &scores_ood)
}

fn batch(r: Vec<f64>, r_star: Vec<f64>, bandwidth: Option<f64>) -> PyResult<LossBatch> {
    match bandwidth {
        Some(h) => LossBatch::with_bandwidth(r, r_star, h),
        None => LossBatch::new(r, r_star),
    }
    .map_err(to_py)
}

/// `-ln(AUCOC)` of the smoothed curve.
#[pyfunction]
#[pyo3(signature = (r, r_star, bandwidth = None))]
fn aucoc_loss(r: Vec<f64>, r_star: Vec<f64>, bandwidth: Option<f64>) -> PyResult<f64> {
    loss::aucoc_loss(&batch(r, r_star, bandwidth)?).map_err(to_py)
}

/// Loss gradients `(d/dr, d/dr_star)`.
#[pyfunction]
#[pyo3(signature = (r, r_star, bandwidth = None))]
fn aucoc_loss_grad(r: Vec<f64>, r_star: Vec<f64>, bandwidth: Option<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let g = loss::aucoc_loss_grad(&batch(r, r_star, bandwidth)?).map_err(to_py)?;
    Ok((g.d_confidence, g.d_true_prob))
}

#[pyfunction]
#[pyo3(signature = (r, r_star, bandwidth = None))]
fn jensen_upper_bound(r: Vec<f64>, r_star: Vec<f64>, bandwidth: Option<f64>) -> PyResult<f64> {
    loss::jensen_upper_bound(&batch(r, r_star, bandwidth)?).map_err(to_py)
}

/// Worst scaled gradient error on one seeded random batch.
#[pyfunction]
#[pyo3(signature = (seed, n = 64, k = 5))]
fn grad_check(seed: u64, n: usize, k: usize) -> PyResult<f64> {
    let b = loss::random_batch(seed, n, k).map_err(to_py)?;
    Ok(loss::grad_check(&b).map_err(to_py)?.worst_error)
}

/// `(accuracy, ece_5bin, aucoc)` for the two fixture models.
#[pyfunction]
fn toy_comparison() -> ((f64, f64, f64), (f64, f64, f64)) {
    let r = coc::toy_comparison();
    let t = |m: &coc::ToyModelSummary| (m.accuracy, m.ece_5bin, m.aucoc);
    (t(&r.a), t(&r.b))
}

#[pyfunction]
#[pyo3(signature = (a, b, rounds = 1000, seed = 0))]
fn permutation_test(a: Vec<f64>, b: Vec<f64>, rounds: usize, seed: u64) -> PyResult<f64> {
    perm_test(&a, &b, rounds, seed).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "cockit")]
fn cockit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPredictionSet>()?;
    m.add_function(wrap_pyfunction!(coc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_aucoc, m)?)?;
    m.add_function(wrap_pyfunction!(kde_aucoc, m)?)?;
    m.add_function(wrap_pyfunction!(tau_at_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_report, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(temperature_scale, m)?)?;
    m.add_function(wrap_pyfunction!(ood_auroc, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aucoc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(aucoc_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(jensen_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(toy_comparison, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_test, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
