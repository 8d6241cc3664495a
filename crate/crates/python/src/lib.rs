//! Python bindings for the planar-range core.

use std::collections::HashMap;
use std::path::PathBuf;

use num_bigint::BigUint;
use planar_range::brownian::{mean_gamma2 as core_mean_gamma2, simulate_bm_stream};
use planar_range::experiments::{gamma2_samples, run_experiment as core_run, ExperimentSpec};
use planar_range::walk::{ilt as core_ilt, occupation, range_size as core_range_size, simulate_walk};
use planar_range::{green, Site, StepLaw};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load(law: Option<PathBuf>) -> PyResult<StepLaw> {
    match law {
        Some(p) => StepLaw::load(p).map_err(err),
        None => Ok(StepLaw::reference()),
    }
}

/// Reference step law as `dx dy num den` lines.
#[pyfunction]
fn reference_law() -> String {
    StepLaw::reference().to_table()
}

/// (c_X, error bound).
#[pyfunction]
#[pyo3(signature = (law=None))]
fn c_x(py: Python<'_>, law: Option<PathBuf>) -> PyResult<(f64, f64)> {
    let law = load(law)?;
    let e = py.detach(|| green::c_x(&law)).map_err(err)?;
    Ok((e.value, e.bound))
}

/// (g_λ, error bound).
#[pyfunction]
#[pyo3(signature = (lam, law=None))]
fn g_lambda(py: Python<'_>, lam: f64, law: Option<PathBuf>) -> PyResult<(f64, f64)> {
    let law = load(law)?;
    let e = py.detach(|| green::g_lambda(&law, lam)).map_err(err)?;
    Ok((e.value, e.bound))
}

/// (G_λ(x, y), error bound) by Fourier quadrature.
#[pyfunction]
#[pyo3(signature = (lam, x, y, law=None))]
fn green_value(py: Python<'_>, lam: f64, x: i64, y: i64, law: Option<PathBuf>) -> PyResult<(f64, f64)> {
    let law = load(law)?;
    let e = py.detach(|| green::green_fourier(&law, lam, Site { x, y })).map_err(err)?;
    Ok((e.value, e.bound))
}

/// Positions S_0..S_n of a seeded walk.
#[pyfunction]
#[pyo3(signature = (n, seed, law=None))]
fn walk(n: usize, seed: u64, law: Option<PathBuf>) -> PyResult<Vec<(i64, i64)>> {
    let w = simulate_walk(&load(law)?, n, seed);
    Ok(w.positions().iter().map(|s| (s.x, s.y)).collect())
}

/// |R(n)| of a seeded walk.
#[pyfunction]
#[pyo3(signature = (n, seed, law=None))]
fn range_size(n: usize, seed: u64, law: Option<PathBuf>) -> PyResult<usize> {
    let w = simulate_walk(&load(law)?, n, seed);
    Ok(core_range_size(&w, n))
}

/// I_k(n) over times 0 ≤ i < n of a seeded walk, exact.
#[pyfunction]
#[pyo3(signature = (n, k, seed, law=None))]
fn ilt(n: usize, k: usize, seed: u64, law: Option<PathBuf>) -> PyResult<BigUint> {
    if k == 0 {
        return Err(err("k must be at least 1"));
    }
    let w = simulate_walk(&load(law)?, n, seed);
    Ok(core_ilt(&occupation(&w, n), k))
}

/// Brownian path samples at spacing h on [0, t], as (x, y) pairs.
#[pyfunction]
#[pyo3(signature = (h, t, seed, index=0))]
fn brownian_path(h: f64, t: f64, seed: u64, index: u64) -> Vec<(f64, f64)> {
    simulate_bm_stream(h, t, seed, index).values().iter().map(|p| (p[0], p[1])).collect()
}

/// γ₂(1) on `paths` seeded paths with ε-schedule {16h, 8h, 4h}.
#[pyfunction]
#[pyo3(signature = (h, paths, seed))]
fn gamma2(py: Python<'_>, h: f64, paths: usize, seed: u64) -> PyResult<Vec<f64>> {
    let est = py.detach(|| gamma2_samples(h, &[16.0 * h, 8.0 * h, 4.0 * h], paths, seed)).map_err(err)?;
    Ok(est.into_iter().map(|e| e.value).collect())
}

/// E γ₂(1) in closed form.
#[pyfunction]
fn mean_gamma2() -> f64 {
    core_mean_gamma2()
}

/// Run one experiment; returns its JSON envelope.
#[pyfunction]
#[pyo3(signature = (name, overrides=None, seed=None, workers=0))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    overrides: Option<HashMap<String, String>>,
    seed: Option<u64>,
    workers: usize,
) -> PyResult<String> {
    let mut spec = ExperimentSpec::defaults(name).map_err(err)?;
    for (k, v) in overrides.unwrap_or_default() {
        spec.set(&k, &v).map_err(err)?;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.workers = workers;
    let result = py.detach(|| core_run(&spec)).map_err(err)?;
    serde_json::to_string(&result).map_err(err)
}

#[pymodule]
fn planar_range_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(reference_law, m)?)?;
    m.add_function(wrap_pyfunction!(c_x, m)?)?;
    m.add_function(wrap_pyfunction!(g_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(green_value, m)?)?;
    m.add_function(wrap_pyfunction!(walk, m)?)?;
    m.add_function(wrap_pyfunction!(range_size, m)?)?;
    m.add_function(wrap_pyfunction!(ilt, m)?)?;
    m.add_function(wrap_pyfunction!(brownian_path, m)?)?;
    m.add_function(wrap_pyfunction!(gamma2, m)?)?;
    m.add_function(wrap_pyfunction!(mean_gamma2, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
