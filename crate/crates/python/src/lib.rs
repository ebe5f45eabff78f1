//! Python bindings. Exposed as the `pydarn` extension module.

use std::path::PathBuf;

use darn::cli::{self, ExperimentConfig, Profile};
use darn::data::{self, DomainDataset, MultiDomainDataset};
use darn::discrepancy;
use darn::nn::Matrix;
use darn::simplex;
use darn::DarnError;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pydarn, DarnException, PyException);
create_exception!(pydarn, ConfigError, DarnException);
create_exception!(pydarn, DivergenceError, DarnException);

fn to_py(err: DarnError) -> PyErr {
    match err {
        DarnError::Config { .. } => ConfigError::new_err(err.to_string()),
        DarnError::Divergence { .. } => DivergenceError::new_err(err.to_string()),
        DarnError::InvalidInput(_) | DarnError::DimensionMismatch { .. } => {
            PyValueError::new_err(err.to_string())
        }
        _ => DarnException::new_err(err.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Projection of a score vector together with the scores it came from, so
/// derivatives can be taken without recomputing the threshold.
#[pyclass(frozen, module = "pydarn")]
struct ProjectionResult {
    z: Vec<f64>,
    inner: simplex::ProjectionResult,
}

#[pymethods]
impl ProjectionResult {
    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.weights.alpha().to_vec()
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.inner.weights.support().to_vec()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    /// `J[i][j] = d alpha_i / d z_j`.
    fn jacobian(&self) -> PyResult<Vec<Vec<f64>>> {
        let j = simplex::darn_jacobian(&self.z, &self.inner).map_err(to_py)?;
        Ok((0..j.dim()).map(|i| j.row(i).to_vec()).collect())
    }

    fn jvp(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        simplex::darn_jvp(&self.z, &self.inner, &v).map_err(to_py)
    }

    fn danskin_residual(&self) -> PyResult<f64> {
        simplex::danskin_residual(&self.z, &self.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.z.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProjectionResult(alpha={:?}, nu={}, steps={})",
            self.inner.weights.alpha(),
            self.inner.nu,
            self.inner.steps
        )
    }
}

#[pyfunction]
#[pyo3(signature = (z, tol = 1e-12))]
fn darn_project(z: Vec<f64>, tol: f64) -> PyResult<ProjectionResult> {
    let inner = simplex::darn_project(&z, tol).map_err(to_py)?;
    Ok(ProjectionResult { z, inner })
}

/// Scores `z = -g / tau` for per-domain losses `g`.
#[pyfunction]
fn scores_from_losses(g: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
    simplex::ScoreVector::from_losses(&g, tau)
        .map(|s| s.into_inner())
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (z, tol = 1e-12))]
fn find_nu(z: Vec<f64>, tol: f64) -> PyResult<f64> {
    simplex::find_nu(&z, tol).map_err(to_py)
}

#[pyfunction]
fn sparsemax(z: Vec<f64>) -> PyResult<Vec<f64>> {
    simplex::sparsemax_project(&z)
        .map(|w| w.into_vec())
        .map_err(to_py)
}

#[pyfunction]
fn softmax(z: Vec<f64>) -> PyResult<Vec<f64>> {
    simplex::softmax(&z).map(|w| w.into_vec()).map_err(to_py)
}

#[pyfunction]
fn aggregate_objective(g: Vec<f64>, alpha: Vec<f64>, tau: f64) -> PyResult<f64> {
    simplex::aggregate_objective(&g, &alpha, tau).map_err(to_py)
}

#[pyfunction]
fn effective_sample_size(alpha: Vec<f64>, m: usize) -> f64 {
    simplex::effective_sample_size(&alpha, m)
}

#[pyfunction]
fn domain_classifier_error(logits: Vec<f64>, is_target: Vec<bool>) -> PyResult<f64> {
    discrepancy::domain_classifier_error(&logits, &is_target).map_err(to_py)
}

#[pyfunction]
fn disc_classification(eps_hat: f64) -> f64 {
    discrepancy::disc_classification(eps_hat)
}

/// Returns `(magnitude, sign, vector, iterations)`.
#[pyfunction]
#[pyo3(signature = (m, max_iters = 100, tol = 1e-10, seed = 0))]
fn power_iteration(
    m: Vec<Vec<f64>>,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> PyResult<(f64, f64, Vec<f64>, usize)> {
    let e = discrepancy::power_iteration(&matrix(m)?, max_iters, tol, seed).map_err(to_py)?;
    Ok((e.magnitude, e.sign, e.vector, e.iterations))
}

/// `||M_T - M_S||_2` for two feature matrices given as lists of rows.
#[pyfunction]
#[pyo3(signature = (target, source, max_iters = 100, tol = 1e-10, seed = 0))]
fn disc_regression(
    target: Vec<Vec<f64>>,
    source: Vec<Vec<f64>>,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> PyResult<f64> {
    let mt = discrepancy::second_moment(&matrix(target)?).map_err(to_py)?;
    let ms = discrepancy::second_moment(&matrix(source)?).map_err(to_py)?;
    discrepancy::disc_regression(&mt, &ms, max_iters, tol, seed).map_err(to_py)
}

fn domain_dict<'py>(py: Python<'py>, d: &DomainDataset) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("name", &d.name)?;
    out.set_item("features", rows_of(&d.features.to_dense()))?;
    out.set_item("labels", d.labels.clone())?;
    Ok(out)
}

fn dataset_dict<'py>(py: Python<'py>, data: &MultiDomainDataset) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    let sources = data
        .sources
        .iter()
        .map(|s| domain_dict(py, s))
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("sources", sources)?;
    out.set_item("target_train", domain_dict(py, &data.target_train)?)?;
    out.set_item("target_eval", domain_dict(py, &data.target_eval)?)?;
    Ok(out)
}

/// `angles` holds the source angles followed by the target angle, in degrees.
#[pyfunction]
#[pyo3(signature = (angles, m = 500, noise = 0.5, seed = 0))]
fn gen_rotated_gaussians<'py>(
    py: Python<'py>,
    angles: Vec<f64>,
    m: usize,
    noise: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    if angles.len() < 2 {
        return Err(PyValueError::new_err("need at least one source angle and a target angle"));
    }
    let data = data::gen_rotated_gaussians(angles.len() - 1, m, &angles, noise, seed).map_err(to_py)?;
    dataset_dict(py, &data)
}

/// Runs an experiment from a JSON config string and returns `summary.json`
/// as a string. Relative dataset paths resolve against `base_dir`.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir, base_dir = None))]
fn run_experiment(
    py: Python<'_>,
    config_json: &str,
    out_dir: PathBuf,
    base_dir: Option<PathBuf>,
) -> PyResult<String> {
    let base_dir = base_dir.unwrap_or_else(|| PathBuf::from("."));
    let config = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let output = py
        .detach(|| cli::run_experiment(&config, &base_dir, &out_dir))
        .map_err(to_py)?;
    serde_json::to_string(&output.summary).map_err(|e| to_py(e.into()))
}

/// Runs the property checks. Returns `(passed, table)`.
#[pyfunction]
#[pyo3(signature = (profile = "fast"))]
fn verify(py: Python<'_>, profile: &str) -> PyResult<(bool, String)> {
    let profile = match profile {
        "default" => Profile::Default,
        "fast" => Profile::Fast,
        other => return Err(PyValueError::new_err(format!("unknown profile `{other}`"))),
    };
    let report = py.detach(|| cli::verify(&profile.settings()));
    Ok((report.passed(), report.table()))
}

#[pymodule]
pub fn pydarn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("DarnException", py.get_type::<DarnException>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DivergenceError", py.get_type::<DivergenceError>())?;
    m.add_class::<ProjectionResult>()?;
    m.add_function(wrap_pyfunction!(darn_project, m)?)?;
    m.add_function(wrap_pyfunction!(scores_from_losses, m)?)?;
    m.add_function(wrap_pyfunction!(find_nu, m)?)?;
    m.add_function(wrap_pyfunction!(sparsemax, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_objective, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(domain_classifier_error, m)?)?;
    m.add_function(wrap_pyfunction!(disc_classification, m)?)?;
    m.add_function(wrap_pyfunction!(power_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(disc_regression, m)?)?;
    m.add_function(wrap_pyfunction!(gen_rotated_gaussians, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
