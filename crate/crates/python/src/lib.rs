//! Python bindings. Matrices cross the boundary as lists of rows and
//! experiment configurations and results as JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use overact::control::{solve_dare, DareOptions, SystemParam};
use overact::harness::config::ExperimentConfig;
use overact::harness::experiment::{run_experiment, summarize_run, RunOptions};
use overact::harness::{benchmark, resolve, selfcheck};
use overact::linalg::{from_rows, to_rows};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct DareResult {
    pub p: Rows,
    pub k: Rows,
    pub j: f64,
    pub residual: f64,
}

pub fn dare(a: &Rows, b: &Rows, q: &Rows, r: &Rows, noise_var: f64) -> overact::Result<DareResult> {
    let theta = SystemParam::from_ab(&from_rows(a)?, &from_rows(b)?)?;
    let sol = solve_dare(&theta, &from_rows(q)?, &from_rows(r)?, noise_var, &DareOptions::default())?;
    Ok(DareResult {
        p: to_rows(&sol.p),
        k: to_rows(&sol.k),
        j: sol.j,
        residual: sol.residual,
    })
}

pub fn plan_json(config: &str) -> overact::Result<String> {
    let resolved = resolve(&ExperimentConfig::from_json_str(config)?)?;
    let plan = resolved.plan()?;
    Ok(serde_json::to_string(&plan).expect("plan serializes"))
}

pub fn simulate_json(config: &str, trials: Option<usize>, seed: Option<u64>) -> overact::Result<String> {
    let mut cfg = ExperimentConfig::from_json_str(config)?;
    if let Some(k) = trials {
        cfg.trials = k;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    let resolved = resolve(&cfg)?;
    let run = run_experiment(&resolved, &RunOptions::from_config(&resolved))?;
    let summary = summarize_run(&resolved, &run, cfg.master_seed);
    Ok(serde_json::to_string(&summary).expect("summary serializes"))
}

fn py_err(e: overact::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Solves the Riccati equation for (A, B, Q, R); returns a dict with
/// `p`, `k`, `j` and `residual`.
#[pyfunction]
#[pyo3(name = "solve_dare", signature = (a, b, q, r, noise_var = 1.0))]
fn py_solve_dare<'py>(
    py: Python<'py>,
    a: Rows,
    b: Rows,
    q: Rows,
    r: Rows,
    noise_var: f64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let res = dare(&a, &b, &q, &r, noise_var).map_err(py_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("p", res.p)?;
    out.set_item("k", res.k)?;
    out.set_item("j", res.j)?;
    out.set_item("residual", res.residual)?;
    Ok(out)
}

/// Exploration plan for a JSON experiment configuration, as JSON.
#[pyfunction]
#[pyo3(name = "plan")]
fn py_plan(py: Python<'_>, config: &str) -> PyResult<String> {
    let config = config.to_owned();
    py.detach(move || plan_json(&config)).map_err(py_err)
}

/// Runs the experiment and returns its summary as JSON.
#[pyfunction]
#[pyo3(name = "simulate", signature = (config, trials = None, seed = None))]
fn py_simulate(py: Python<'_>, config: &str, trials: Option<usize>, seed: Option<u64>) -> PyResult<String> {
    let config = config.to_owned();
    py.detach(move || simulate_json(&config, trials, seed)).map_err(py_err)
}

/// The built-in three-actuator benchmark configuration as JSON.
#[pyfunction]
fn benchmark_config() -> String {
    benchmark::config().to_json()
}

/// Numerical oracle checks as (name, passed, detail) tuples.
#[pyfunction]
#[pyo3(name = "selfcheck")]
fn py_selfcheck(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(selfcheck::run_all)
        .into_iter()
        .map(|c| (c.name, c.passed, c.detail))
        .collect()
}

#[pymodule]
fn pyoveract(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(py_solve_dare, m)?)?;
    m.add_function(wrap_pyfunction!(py_plan, m)?)?;
    m.add_function(wrap_pyfunction!(py_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_config, m)?)?;
    m.add_function(wrap_pyfunction!(py_selfcheck, m)?)?;
    Ok(())
}
