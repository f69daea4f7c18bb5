//! Python bindings: configuration, domains, training, evaluation and the
//! distance and windowing helpers. Feature batches cross the boundary as
//! lists of rows.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError};
use pyo3::prelude::*;

use sagan_core::config::RunConfig;
use sagan_core::data::{self, Domain, Role};
use sagan_core::distance;
use sagan_core::eval::{self, ConfusionMatrix, Evaluation};
use sagan_core::matrix::Matrix;
use sagan_core::model::{ClassifierNet, SaganModel};
use sagan_core::synth::TranslatedPair;
use sagan_core::trainer::{self, TrainState};

create_exception!(sagan, SaganError, PyException);

fn py_err(e: sagan_core::Error) -> PyErr {
    match e {
        sagan_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => SaganError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    Matrix::from_rows(rows).map_err(py_err)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

/// Flat `key = value` run configuration with a stable digest.
#[pyclass(name = "RunConfig", module = "sagan", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Defaults, or the parsed contents of a configuration text.
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => RunConfig::parse(t).map_err(py_err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).map_err(py_err)?,
        })
    }

    /// Sets one key from its textual value, e.g. `set("trainer.epochs", "20")`.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)?;
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn entries(&self) -> Vec<(String, String)> {
        self.inner.entries()
    }

    fn canonical(&self) -> String {
        self.inner.canonical()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(seed={}, digest={})",
            self.inner.seed,
            &self.inner.digest()[..12]
        )
    }
}

/// Feature rows of one subject in one role.
#[pyclass(name = "Domain", module = "sagan", skip_from_py_object)]
#[derive(Clone)]
struct PyDomain {
    inner: Domain,
}

#[pymethods]
impl PyDomain {
    #[new]
    #[pyo3(signature = (features, labels, n_classes, subject_id, role="source"))]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        n_classes: usize,
        subject_id: &str,
        role: &str,
    ) -> PyResult<Self> {
        let role: Role = role.parse().map_err(py_err)?;
        let inner = Domain::new(to_matrix(&features)?, labels, n_classes, subject_id, role).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(<[usize]>::to_vec)
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id().to_string()
    }

    #[getter]
    fn role(&self) -> String {
        self.inner.role().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Unlabeled copy in the target role.
    fn as_target(&self) -> Self {
        Self {
            inner: self.inner.as_target(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Domain(subject_id={:?}, role={}, rows={}, dim={})",
            self.inner.subject_id(),
            self.inner.role(),
            self.inner.len(),
            self.inner.dim()
        )
    }
}

/// Confusion matrix and weighted F1 of one evaluation.
#[pyclass(name = "Evaluation", module = "sagan", frozen)]
struct PyEvaluation {
    inner: Evaluation,
}

#[pymethods]
impl PyEvaluation {
    #[getter]
    fn weighted_f1(&self) -> f64 {
        self.inner.weighted_f1
    }

    /// Rows are true classes, columns predictions.
    #[getter]
    fn confusion(&self) -> Vec<Vec<u64>> {
        self.inner.confusion.rows()
    }

    /// `(class, precision, recall, f1, support)` per class.
    #[getter]
    fn per_class(&self) -> Vec<(usize, f64, f64, f64, u64)> {
        self.inner
            .per_class
            .iter()
            .map(|c| (c.class, c.precision, c.recall, c.f1, c.support))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Evaluation(weighted_f1={:.4})", self.inner.weighted_f1)
    }
}

/// A trained activity classifier.
#[pyclass(name = "Classifier", module = "sagan", skip_from_py_object)]
#[derive(Clone)]
struct PyClassifier {
    inner: ClassifierNet,
}

#[pymethods]
impl PyClassifier {
    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.inner.predict(&to_matrix(&features)?).map_err(py_err)
    }

    fn logits(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.logits(&to_matrix(&features)?).map_err(py_err)?))
    }

    fn evaluate(&self, test: &PyDomain) -> PyResult<PyEvaluation> {
        Ok(PyEvaluation {
            inner: eval::evaluate(&self.inner, &test.inner).map_err(py_err)?,
        })
    }
}

/// Selected networks of an adversarial run plus its training record.
#[pyclass(name = "FitResult", module = "sagan")]
struct PyFitResult {
    model: SaganModel,
    state: TrainState,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn classifier(&self) -> PyClassifier {
        PyClassifier {
            inner: self.model.classifier.clone(),
        }
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.state.best_epoch
    }

    #[getter]
    fn degraded(&self) -> bool {
        self.state.degraded
    }

    #[getter]
    fn initial_score(&self) -> f64 {
        self.state.initial_score
    }

    /// `(epoch, selection_score)` per completed epoch.
    #[getter]
    fn curve(&self) -> Vec<(usize, f64)> {
        self.state.epochs.iter().map(|e| (e.epoch, e.selection_score)).collect()
    }

    /// Generated target-like windows for source rows (no noise, eval mode).
    fn generate(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_matrix(&features)?;
        let z = Matrix::zeros(x.rows(), x.cols());
        let out = self
            .model
            .generator
            .generate(&x, &z, sagan_core::model::NetMode::Eval)
            .map_err(py_err)?;
        Ok(to_rows(&out))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.model.save(&path).map_err(py_err)
    }
}

/// Weighted F1 of a square confusion matrix given as count rows.
#[pyfunction]
fn weighted_f1(confusion: Vec<Vec<u64>>) -> PyResult<f64> {
    ConfusionMatrix::from_rows(&confusion)
        .and_then(|c| c.weighted_f1())
        .map_err(py_err)
}

/// Exact W1 between equally sized point sets; returns `(cost, pairing)`.
#[pyfunction]
fn w1_exact(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    let (cost, plan) = distance::w1_exact(&to_matrix(&a)?, &to_matrix(&b)?).map_err(py_err)?;
    Ok((cost, plan.pairing))
}

/// Mean exact W1 over repeated balanced subsamples.
#[pyfunction]
#[pyo3(signature = (a, b, n_sub=distance::DEFAULT_N_SUB, n_repeats=distance::DEFAULT_REPEATS, seed=0))]
fn w1_estimate(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, n_sub: usize, n_repeats: usize, seed: u64) -> PyResult<f64> {
    distance::w1_estimate(&to_matrix(&a)?, &to_matrix(&b)?, n_sub, n_repeats, seed).map_err(py_err)
}

#[pyfunction]
fn window_len_for(window_seconds: f64, sample_rate_hz: f64) -> PyResult<usize> {
    data::window_len_for(window_seconds, sample_rate_hz).map_err(py_err)
}

#[pyfunction]
fn stride_for(window_len: usize, overlap: f64) -> PyResult<usize> {
    data::stride_for(window_len, overlap).map_err(py_err)
}

#[pyfunction]
fn window_count(time: usize, window_len: usize, stride: usize) -> usize {
    data::window_count(time, window_len, stride)
}

/// Synthetic source/target pair; keys are `<source|target>_<split>`.
#[pyfunction]
#[pyo3(signature = (seed=0, magnitude=3.5, dim=16, n_classes=6, samples_per_class=100, noise_sigma=0.25))]
fn translated_pair(
    seed: u64,
    magnitude: f64,
    dim: usize,
    n_classes: usize,
    samples_per_class: usize,
    noise_sigma: f64,
) -> PyResult<BTreeMap<String, PyDomain>> {
    let pair = TranslatedPair {
        dim,
        n_classes,
        samples_per_class,
        noise_sigma,
        magnitude,
        seed,
    };
    let (src, tgt) = pair.build().map_err(py_err)?;
    let mut out = BTreeMap::new();
    for (side, s) in [("source", src), ("target", tgt)] {
        for (split, d) in [("train", s.train), ("validation", s.validation), ("test", s.test)] {
            out.insert(format!("{side}_{split}"), PyDomain { inner: d });
        }
    }
    Ok(out)
}

/// Adversarial training of the generator, discriminator and classifier.
/// `target` may be labeled; its labels are ignored.
#[pyfunction]
fn fit(source: &PyDomain, target: &PyDomain, config: &PyRunConfig) -> PyResult<PyFitResult> {
    let out = trainer::fit(&source.inner, &target.inner.as_target(), &config.inner.sagan()).map_err(py_err)?;
    Ok(PyFitResult {
        model: out.model,
        state: out.state,
    })
}

/// Plain supervised classifier on one labeled domain.
#[pyfunction]
#[pyo3(signature = (train, config, epochs=None, seed=None))]
fn train_classifier(
    train: &PyDomain,
    config: &PyRunConfig,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> PyResult<PyClassifier> {
    let cfg = config.inner.sagan();
    let epochs = epochs.unwrap_or(config.inner.classifier_epochs);
    let inner = trainer::train_classifier(&train.inner, &cfg, epochs, seed.unwrap_or(cfg.seed)).map_err(py_err)?;
    Ok(PyClassifier { inner })
}

#[pymodule]
fn sagan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SaganError", m.py().get_type::<SaganError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyEvaluation>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(weighted_f1, m)?)?;
    m.add_function(wrap_pyfunction!(w1_exact, m)?)?;
    m.add_function(wrap_pyfunction!(w1_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(window_len_for, m)?)?;
    m.add_function(wrap_pyfunction!(stride_for, m)?)?;
    m.add_function(wrap_pyfunction!(window_count, m)?)?;
    m.add_function(wrap_pyfunction!(translated_pair, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(train_classifier, m)?)?;
    Ok(())
}
