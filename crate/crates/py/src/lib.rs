//! Python bindings: presets, runs as CSV text, and the verify suite.

use epmem::runner::{
    self, csv_string, parse_config, InitialState, Scenario, StateName, VerifyOptions,
};
use epmem::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidState(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn scenario(
    preset: Option<&str>,
    config: Option<&str>,
    steps: Option<usize>,
    tmax: Option<f64>,
    beta_a: Option<f64>,
) -> PyResult<Scenario> {
    let mut s = match (preset, config) {
        (Some(p), None) => runner::preset(p),
        (None, Some(text)) => parse_config(text),
        _ => Err(Error::Config("give exactly one of preset or config".into())),
    }
    .map_err(py_err)?;
    if let Some(n) = steps {
        s.cfg.n_steps = n;
    }
    if let Some(t) = tmax {
        s.cfg.t_max = t;
    }
    if let Some(b) = beta_a {
        s.params.beta_a = Some(b);
        s.initial_state = InitialState::Named(StateName::Thermal);
    }
    s.validate().map_err(py_err)?;
    Ok(s)
}

#[pyfunction]
fn presets() -> Vec<String> {
    runner::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

#[pyfunction]
fn csv_header() -> &'static str {
    runner::CSV_HEADER
}

/// Entropy-production time series as CSV text.
#[pyfunction]
#[pyo3(signature = (preset=None, config=None, steps=None, tmax=None, beta_a=None))]
fn trace(
    py: Python<'_>,
    preset: Option<&str>,
    config: Option<&str>,
    steps: Option<usize>,
    tmax: Option<f64>,
    beta_a: Option<f64>,
) -> PyResult<String> {
    let s = scenario(preset, config, steps, tmax, beta_a)?;
    py.detach(|| runner::run_trace(&s).map(|r| csv_string(&r)))
        .map_err(py_err)
}

/// Divisibility flags, σ^fp_min and σ_map as CSV text.
#[pyfunction]
#[pyo3(signature = (preset=None, config=None, steps=None, tmax=None))]
fn divisibility(
    py: Python<'_>,
    preset: Option<&str>,
    config: Option<&str>,
    steps: Option<usize>,
    tmax: Option<f64>,
) -> PyResult<String> {
    let s = scenario(preset, config, steps, tmax, None)?;
    py.detach(|| runner::run_divisibility(&s).map(|r| csv_string(&r)))
        .map_err(py_err)
}

/// Runs the check suite; returns `(passed, scoreboard)`.
#[pyfunction]
#[pyo3(signature = (preset=None, config=None, me_states=20))]
fn verify(
    py: Python<'_>,
    preset: Option<&str>,
    config: Option<&str>,
    me_states: usize,
) -> PyResult<(bool, String)> {
    let s = scenario(preset, config, None, None, None)?;
    let opts = VerifyOptions {
        me_states,
        ..VerifyOptions::default()
    };
    let rep = py.detach(|| runner::run_verify(&s.name.clone(), &[s], false, &opts));
    Ok((rep.passed(), rep.scoreboard()))
}

#[pymodule]
fn pyepmem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(csv_header, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(divisibility, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
