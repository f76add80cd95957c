//! Python bindings. Inputs and outputs use the same JSON schema as the
//! `overconv` command line tool.

use overconv::cyclo::{self, DualExpReading};
use overconv::frobenius::{Frobenius, TMode};
use overconv::kforms::FormContext;
use overconv::logderiv::{default_max_iters, log_derivative as run_log_derivative, overconvergence_of_limit};
use overconv::overconvergence::{minimal_level as level_of, RamificationConfig};
use overconv::{json, suite, RunConfig};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;

create_exception!(overconv, OverconvError, PyException, "A domain error; the message starts with its kind.");

fn to_py(e: overconv::Error) -> PyErr {
    match e {
        overconv::Error::Parse(m) => PyValueError::new_err(m),
        other => OverconvError::new_err(format!("{}: {other}", other.kind())),
    }
}

fn parse(text: &str) -> PyResult<Value> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("malformed JSON: {e}")))
}

fn config(text: Option<&str>) -> PyResult<RunConfig> {
    match text {
        Some(t) => json::run_config_from(&parse(t)?).map_err(to_py),
        None => Ok(RunConfig::default()),
    }
}

fn render(v: Value, cfg: &RunConfig) -> String {
    json::render(&json::with(v, "seed", Value::from(cfg.seed)))
}

/// Run the command line tool in-process; returns `(exit_code, stdout)`.
#[pyfunction]
fn run(args: Vec<String>) -> (i32, String) {
    overconv::cli::run(std::iter::once("overconv".to_string()).chain(args))
}

/// Overconvergence report for a series.
#[pyfunction]
#[pyo3(signature = (series, config=None))]
fn minimal_level(series: &str, config: Option<&str>) -> PyResult<String> {
    let cfg = self::config(config)?;
    let x = json::series_from(cfg.ctx, &parse(series)?).map_err(to_py)?;
    let ram = RamificationConfig::new(cfg.e).map_err(to_py)?;
    Ok(render(json::overconvergence_report(&level_of(&x, ram, cfg.level_cap)), &cfg))
}

/// Frobenius trace of a series.
#[pyfunction]
#[pyo3(signature = (series, config=None))]
fn trace(series: &str, config: Option<&str>) -> PyResult<String> {
    let cfg = self::config(config)?;
    let x = json::series_from(cfg.ctx, &parse(series)?).map_err(to_py)?;
    let t = Frobenius::unramified(cfg.ctx, TMode::Standard).trace(&x).map_err(to_py)?;
    Ok(render(json::series(&t), &cfg))
}

/// Convergence ledger of the iterated logarithmic derivative (unramified base).
#[pyfunction]
#[pyo3(signature = (symbol, config=None, max_iters=None))]
fn log_derivative(symbol: &str, config: Option<&str>, max_iters: Option<usize>) -> PyResult<String> {
    let cfg = self::config(config)?;
    let x = json::symbol_from(cfg.ctx, &parse(symbol)?).map_err(to_py)?;
    let fc = FormContext::unramified(cfg.ctx).map_err(to_py)?;
    let l = run_log_derivative(&fc, &x, max_iters.unwrap_or_else(|| default_max_iters(&fc))).map_err(to_py)?;
    let mut v = json::ledger(&l);
    if l.converged() {
        let r = overconvergence_of_limit(&l, cfg.level_cap).map_err(to_py)?;
        v = json::with(v, "limit_overconvergence", json::overconvergence_report(&r));
    }
    Ok(render(v, &cfg))
}

/// Dual exponential of a symbol product at layer `m`.
#[pyfunction]
#[pyo3(signature = (symbol, m, level=1, reading="volume", config=None))]
fn dual_exp(symbol: &str, m: u32, level: u32, reading: &str, config: Option<&str>) -> PyResult<String> {
    let cfg = self::config(config)?;
    let x = json::symbol_from(cfg.ctx, &parse(symbol)?).map_err(to_py)?;
    let fc = FormContext::unramified(cfg.ctx).map_err(to_py)?;
    let d = cyclo::dual_exp(&fc, &x, m, level, DualExpReading::parse(reading).map_err(to_py)?).map_err(to_py)?;
    Ok(render(json::dual_exp(&d, cfg.ctx), &cfg))
}

/// Coefficients of `Φ_{p^m}(1 + x)`, lowest degree first.
#[pyfunction]
fn cyclotomic_modulus(p: u64, m: u32) -> PyResult<Vec<i128>> {
    cyclo::cyclotomic_modulus(p, m).map_err(to_py)
}

/// The randomized property suite report.
#[pyfunction]
#[pyo3(signature = (seed=0, count=suite::DEFAULT_COUNT, config=None))]
fn run_suite(seed: u64, count: usize, config: Option<&str>) -> PyResult<String> {
    let mut cfg = self::config(config)?;
    cfg.seed = seed;
    Ok(json::render(&suite::run_suite(&cfg, count).to_json()))
}

#[pymodule]
#[pyo3(name = "overconv")]
fn overconv_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OverconvError", m.py().get_type::<OverconvError>())?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(minimal_level, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(log_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(dual_exp, m)?)?;
    m.add_function(wrap_pyfunction!(cyclotomic_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
