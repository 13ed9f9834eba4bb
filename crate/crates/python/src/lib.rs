//! Python bindings: special functions, UCA geometry, experiment
//! configuration, single-realization estimation and Monte-Carlo sweeps.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ringbayes::estimators::baselines::{self, OmpOptions};
use ringbayes::estimators::sbl::{self, SblOptions};
use ringbayes::estimators::run_estimator;
use ringbayes::geometry::{DistanceModel, UcaGeometry};
use ringbayes::harness::output::DerivedValues;
use ringbayes::harness::sweep::nmse;
use ringbayes::harness::{
    child_seed, draw_trial, emit_results, run_ber_sweep, run_frames_sweep, run_nmse_sweep, Execution,
    ExperimentConfig, Metric, SweepResult,
};
use ringbayes::linalg::{CMat, CVec};
use ringbayes::specfun;

fn err(e: ringbayes::Error) -> PyErr {
    match e {
        ringbayes::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_cmat(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(CMat::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn parse_model(name: &str) -> PyResult<DistanceModel> {
    match name {
        "taylor" => Ok(DistanceModel::Taylor),
        "exact" => Ok(DistanceModel::Exact),
        _ => Err(PyValueError::new_err(format!("unknown distance model {name:?}"))),
    }
}

#[pyfunction]
fn bessel_j0(x: f64) -> PyResult<f64> {
    specfun::bessel_j0(x).map_err(err)
}

/// Smallest positive x with J0(x) = delta, for delta in (0, 1].
#[pyfunction]
fn inv_j0_mainlobe(delta: f64) -> PyResult<f64> {
    specfun::inv_j0_mainlobe(delta).map_err(err)
}

#[pyfunction]
fn first_j0_zero() -> f64 {
    specfun::first_j0_zero()
}

#[pyclass(name = "UcaGeometry", frozen)]
struct PyUca(UcaGeometry);

#[pymethods]
impl PyUca {
    #[new]
    fn new(n_elements: usize, radius: f64, wavelength: f64) -> PyResult<Self> {
        UcaGeometry::new(n_elements, radius, wavelength).map(Self).map_err(err)
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.0.n_elements()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.0.radius()
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.0.wavelength()
    }

    #[getter]
    fn fresnel_distance(&self) -> f64 {
        self.0.fresnel_distance()
    }

    fn far_steering(&self, theta: f64) -> Vec<Complex64> {
        self.0.far_steering(theta).iter().copied().collect()
    }

    /// `model` is "taylor" or "exact".
    #[pyo3(signature = (r, theta, model = "taylor"))]
    fn near_steering(&self, r: f64, theta: f64, model: &str) -> PyResult<Vec<Complex64>> {
        let v = self.0.near_steering(r, theta, parse_model(model)?).map_err(err)?;
        Ok(v.iter().copied().collect())
    }
}

#[pyclass(name = "Config", frozen)]
struct PyConfig(ExperimentConfig);

#[pymethods]
impl PyConfig {
    /// A named preset: "full" or "desk".
    #[new]
    #[pyo3(signature = (preset = "full"))]
    fn new(preset: &str) -> PyResult<Self> {
        ExperimentConfig::preset(preset).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml_str(text).map(Self).map_err(err)
    }

    /// Copy with the given fields replaced, e.g. `cfg.replace(trials=5)`.
    #[pyo3(signature = (**fields))]
    fn replace(&self, py: Python<'_>, fields: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut value = serde_json::to_value(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))?;
        if let Some(fields) = fields {
            let text: String = py.import("json")?.call_method1("dumps", (fields,))?.extract()?;
            let patch: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
            let obj = value.as_object_mut().expect("config serializes to an object");
            obj.extend(patch);
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.0)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.to_toml_string().map_err(err)
    }

    /// Wavelength, radius, ring constant and the other quantities derived
    /// from the configuration.
    fn derived<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &DerivedValues::from_config(&self.0).map_err(err)?)
    }

    fn codebook_summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let setup = self.0.build_setup().map_err(err)?;
        let cb = &setup.codebook;
        let d = to_python(py, &cb.header())?;
        d.set_item("n_angles", cb.n_angles())?;
        d.set_item("n_rings", cb.n_rings())?;
        d.set_item("n_columns", cb.n_columns())?;
        d.set_item("adjacent_angle_coherence", cb.adjacent_angle_coherence())?;
        d.set_item("mutual_coherence", cb.mutual_coherence())?;
        d.set_item("dictionary_columns", setup.dictionary.n_columns())?;
        Ok(d)
    }

    /// Runs every configured estimator on one seeded realization.
    #[pyo3(signature = (snr_db = None, trial = 0))]
    fn estimate<'py>(&self, py: Python<'py>, snr_db: Option<f64>, trial: usize) -> PyResult<Bound<'py, PyList>> {
        let cfg = &self.0;
        let setup = cfg.build_setup().map_err(err)?;
        let snr = snr_db.unwrap_or(cfg.snr_grid_db[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, 0, trial));
        let draw = draw_trial(cfg, &setup, snr, &mut rng).map_err(err)?;
        let settings = cfg.estimator_settings();
        let out = PyList::empty(py);
        for kind in cfg.estimator_kinds().map_err(err)? {
            let est = run_estimator(kind, &draw.y, &draw.model, &settings).map_err(err)?;
            let d = to_python(py, &est.diagnostics)?;
            d.set_item("estimator", kind.name())?;
            d.set_item("nmse_db", 10.0 * nmse(&est.h_matrix, &draw.channel.matrix).log10())?;
            out.append(d)?;
        }
        Ok(out)
    }

    /// Monte-Carlo sweep. `metric` is "nmse" or "ber"; `frames` turns an
    /// NMSE sweep into a sweep over pilot-frame counts. With `out`, the
    /// CSV and metadata files are also written there.
    #[pyo3(signature = (metric = "nmse", frames = None, serial = false, out = None))]
    fn sweep<'py>(
        &self,
        py: Python<'py>,
        metric: &str,
        frames: Option<Vec<usize>>,
        serial: bool,
        out: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.0;
        let exec = if serial { Execution::Serial } else { Execution::Parallel };
        let metric: Metric = metric.parse().map_err(err)?;
        let result: SweepResult = match (metric, &frames) {
            (Metric::Nmse, Some(m)) => run_frames_sweep(cfg, m, exec),
            (Metric::Nmse, None) => run_nmse_sweep(cfg, exec),
            (Metric::Ber, None) => run_ber_sweep(cfg, exec),
            (Metric::Ber, Some(_)) => return Err(PyValueError::new_err("frames applies to the nmse metric only")),
        }
        .map_err(err)?;
        if let Some(dir) = out {
            emit_results(&result, cfg, frames.as_deref().unwrap_or(&[]), &dir).map_err(err)?;
        }
        let rows = PyList::empty(py);
        for r in &result.rows {
            let d = PyDict::new(py);
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("frames", r.frames)?;
            d.set_item("estimator", &r.estimator)?;
            d.set_item("nmse_db", r.nmse_db)?;
            d.set_item("nmse_ci", r.nmse_ci)?;
            d.set_item("ber", r.ber)?;
            d.set_item("trials", r.trials)?;
            rows.append(d)?;
        }
        let trials = PyList::empty(py);
        for t in &result.trials {
            let d = PyDict::new(py);
            d.set_item("snr_db", t.snr_db)?;
            d.set_item("frames", t.frames)?;
            d.set_item("trial", t.trial)?;
            d.set_item("estimator", &t.estimator)?;
            d.set_item("nmse", t.nmse)?;
            d.set_item("iterations", t.iterations)?;
            d.set_item("bit_errors", t.bit_errors)?;
            d.set_item("bits", t.bits)?;
            trials.append(d)?;
        }
        let d = PyDict::new(py);
        d.set_item("metric", metric.to_string())?;
        d.set_item("rows", rows)?;
        d.set_item("trials", trials)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(n_r={}, n_t={}, frames={}, paths={}, n_angles={}, n_rings={}, trials={})",
            self.0.n_r, self.0.n_t, self.0.frames, self.0.paths, self.0.n_angles, self.0.n_rings, self.0.trials
        )
    }
}

/// EM sparse Bayesian learning for `y = omega x + n`, `n ~ CN(0, noise_cov)`.
#[pyfunction]
#[pyo3(signature = (y, omega, noise_cov, epsilon = 1.0, k_max = 30, woodbury = true))]
fn sparse_bayes<'py>(
    py: Python<'py>,
    y: Vec<Complex64>,
    omega: Vec<Vec<Complex64>>,
    noise_cov: Vec<Vec<Complex64>>,
    epsilon: f64,
    k_max: usize,
    woodbury: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = SblOptions { epsilon, k_max, woodbury, ..SblOptions::default() };
    let fit = sbl::sparse_bayes(&CVec::from_vec(y), &to_cmat(omega)?, &to_cmat(noise_cov)?, &opts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mu", fit.state.mu.iter().copied().collect::<Vec<_>>())?;
    d.set_item("gamma", &fit.state.gamma)?;
    d.set_item("sigma_diag", &fit.state.sigma_diag)?;
    d.set_item("iterations", fit.state.iteration)?;
    d.set_item("converged", fit.state.converged)?;
    d.set_item("log_likelihood_trace", &fit.log_likelihood_trace)?;
    Ok(d)
}

/// Orthogonal matching pursuit; returns `(coefficients, support)`.
#[pyfunction]
#[pyo3(signature = (a, y, max_atoms, residual_tol = 1e-3))]
fn omp(
    a: Vec<Vec<Complex64>>,
    y: Vec<Complex64>,
    max_atoms: usize,
    residual_tol: f64,
) -> PyResult<(Vec<Complex64>, Vec<usize>)> {
    let fit = baselines::omp(&to_cmat(a)?, &CVec::from_vec(y), &OmpOptions { max_atoms, residual_tol })
        .map_err(err)?;
    Ok((fit.coefficients.iter().copied().collect(), fit.support))
}

#[pymodule]
fn ringbayes_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(bessel_j0, m)?)?;
    m.add_function(wrap_pyfunction!(inv_j0_mainlobe, m)?)?;
    m.add_function(wrap_pyfunction!(first_j0_zero, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_bayes, m)?)?;
    m.add_function(wrap_pyfunction!(omp, m)?)?;
    m.add_class::<PyUca>()?;
    m.add_class::<PyConfig>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
