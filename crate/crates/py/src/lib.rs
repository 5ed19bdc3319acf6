//! Python bindings. Reports and metrics cross the boundary as JSON text;
//! time series as lists of floats.

use std::path::PathBuf;

use icguard::config::ScenarioConfig;
use icguard::harness::{self, RunMetrics};
use icguard::linalg::Vector;
use icguard::{detect, model, sim, smo};
use pyo3::create_exception;
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(icguard_py, ConfigError, PyValueError, "Invalid configuration or violated model assumption.");
create_exception!(icguard_py, SimulationError, PyRuntimeError, "Failure while running a scenario.");

fn to_py(e: icguard::Error) -> PyErr {
    if e.is_config() {
        ConfigError::new_err(e.to_string())
    } else {
        SimulationError::new_err(e.to_string())
    }
}

fn json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Scenario configuration; keys and defaults as in the JSON config file.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (json = "{}"))]
    fn new(json: &str) -> PyResult<Self> {
        let inner = ScenarioConfig::from_json(json).map_err(|e| ConfigError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    /// Default scenario with the calibrated step attack.
    #[staticmethod]
    fn attacked() -> Self {
        Self { inner: ScenarioConfig::attacked() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = ScenarioConfig::load(&path).map_err(|e| ConfigError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Config(duration={}, attack={:?})", self.inner.duration, self.inner.attack)
    }
}

/// Result of one seeded run.
#[pyclass(name = "RunResult", frozen)]
struct PyRunResult {
    result: sim::RunResult,
    config: ScenarioConfig,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn seed(&self) -> u64 {
        self.result.seed
    }

    #[getter]
    fn crash(&self) -> Option<f64> {
        self.result.crash
    }

    #[getter]
    fn novel_first_persistent_alarm(&self) -> Option<f64> {
        self.result.novel.first_persistent_alarm
    }

    #[getter]
    fn eoi_first_persistent_alarm(&self) -> Option<f64> {
        self.result.eoi.first_persistent_alarm
    }

    fn __len__(&self) -> usize {
        self.result.samples.len()
    }

    /// CSV column names, in export order.
    #[staticmethod]
    fn columns() -> Vec<String> {
        harness::csv_header()
    }

    /// One CSV column as a list.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let idx = harness::csv_header()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| PyKeyError::new_err(name.to_string()))?;
        Ok(harness::csv_rows(&self.result).into_iter().map(|r| r[idx]).collect())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        harness::csv_rows(&self.result)
    }

    fn metrics_json(&self) -> PyResult<String> {
        json(&RunMetrics::from_result(&self.result, &self.config))
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        harness::export_csv(&self.result, &path).map_err(to_py)
    }
}

/// Structural report for a configuration, as JSON.
#[pyfunction]
fn check_model(config: &PyConfig) -> PyResult<String> {
    json(&harness::check_model(&config.inner).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (config, seed = 0))]
fn run(py: Python<'_>, config: &PyConfig, seed: u64) -> PyResult<PyRunResult> {
    let cfg = config.inner.clone();
    let result = py.detach(|| harness::run_scenario(&cfg, seed)).map_err(to_py)?;
    Ok(PyRunResult { result, config: cfg })
}

/// Seeded sweep; returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (config, runs, seed_base = 0))]
fn monte_carlo(py: Python<'_>, config: &PyConfig, runs: usize, seed_base: u64) -> PyResult<String> {
    let cfg = config.inner.clone();
    let summary = py.detach(|| harness::monte_carlo(&cfg, runs, seed_base)).map_err(to_py)?;
    json(&summary)
}

fn vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn check_len(a: &[f64], b: &[f64]) -> PyResult<()> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Per-channel `(upper, lower)` band on `e2` from one innovation sample.
#[pyfunction]
fn measurement_band(e_y: Vec<f64>, zeta_bar: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    check_len(&e_y, &zeta_bar)?;
    let (up, lo) = detect::measurement_band(&vector(e_y), &vector(zeta_bar));
    Ok((up.iter().copied().collect(), lo.iter().copied().collect()))
}

#[pyfunction]
#[pyo3(signature = (e_y, m, boundary_layer = None))]
fn switching_injection(e_y: Vec<f64>, m: Vec<f64>, boundary_layer: Option<f64>) -> PyResult<Vec<f64>> {
    check_len(&e_y, &m)?;
    Ok(smo::switching_injection(&vector(e_y), &vector(m), boundary_layer).iter().copied().collect())
}

/// One exact step of the first-order EOI filter.
#[pyfunction]
fn eoi_filter(nu_fil: Vec<f64>, nu: Vec<f64>, k: Vec<f64>, dt: f64) -> PyResult<Vec<f64>> {
    check_len(&nu_fil, &nu)?;
    check_len(&nu, &k)?;
    Ok(smo::eoi_filter(&vector(nu_fil), &vector(nu), &vector(k), dt).iter().copied().collect())
}

#[pyfunction]
fn model_uncertainty(r_tau: f64, u_leader: f64, a_leader: f64) -> f64 {
    model::model_uncertainty(r_tau, u_leader, a_leader)
}

#[pymodule]
fn icguard_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(check_model, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(measurement_band, m)?)?;
    m.add_function(wrap_pyfunction!(switching_injection, m)?)?;
    m.add_function(wrap_pyfunction!(eoi_filter, m)?)?;
    m.add_function(wrap_pyfunction!(model_uncertainty, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("SimulationError", m.py().get_type::<SimulationError>())?;
    Ok(())
}
