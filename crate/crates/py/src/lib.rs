//! Python module `lodac`.

use std::path::PathBuf;

use lodac::harness::{train, ExperimentConfig};
use lodac::portfolio::{search_optimal_portfolio, sweep_all_portfolios, FamilyKind, DEFAULT_SWEEP_CAP};
use lodac::sim::{stream_rng, Terminal};
use lodac::{
    estimate_runtime, make_portfolio, optimal_restricted_policy, run_rls, Backend, EnvSpec, Error, Instance,
    LeadingOnesEnv, Policy, Portfolio, RuntimeMoments,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidRadius { .. }
        | Error::InvalidArgument(_)
        | Error::UnsolvablePortfolio(_)
        | Error::Representation(_)
        | Error::FamilyUndefined { .. }
        | Error::InvalidAction { .. }
        | Error::Parse(_)
        | Error::EnumerationTooLarge { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn portfolio(n: usize, radii: Vec<usize>) -> PyResult<Portfolio> {
    Portfolio::new(n, radii).map_err(to_py)
}

/// A fitness-dependent radius policy.
/// (step, fitness_before, radius, fitness_after, reward)
type TraceRow = (u64, usize, usize, usize, f64);

#[pyclass(name = "Policy", module = "lodac")]
struct PyPolicy(Policy);

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn from_table(n: usize, radii: Vec<usize>, table: Vec<usize>) -> PyResult<Self> {
        Ok(PyPolicy(
            Policy::from_table(portfolio(n, radii)?, table).map_err(to_py)?,
        ))
    }

    #[staticmethod]
    fn from_breakpoints(n: usize, radii: Vec<usize>, breakpoints: Vec<i64>) -> PyResult<Self> {
        Ok(PyPolicy(
            Policy::from_breakpoints(portfolio(n, radii)?, breakpoints).map_err(to_py)?,
        ))
    }

    /// Optimal policy using only the given radii.
    #[staticmethod]
    fn optimal(n: usize, radii: Vec<usize>) -> PyResult<Self> {
        Ok(PyPolicy(
            optimal_restricted_policy(&portfolio(n, radii)?).map_err(to_py)?,
        ))
    }

    #[staticmethod]
    fn constant(n: usize, radius: usize) -> PyResult<Self> {
        Ok(PyPolicy(Policy::constant(n, radius).map_err(to_py)?))
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyPolicy(text.parse().map_err(to_py)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn radii(&self) -> Vec<usize> {
        self.0.portfolio().radii().to_vec()
    }

    fn lookup(&self, fitness: usize) -> PyResult<usize> {
        self.0.lookup(fitness).map_err(to_py)
    }

    fn table(&self) -> Vec<usize> {
        self.0.to_table()
    }

    fn breakpoints(&self) -> PyResult<Vec<i64>> {
        self.0.to_breakpoints().map_err(to_py)
    }

    fn expected_runtime(&self) -> f64 {
        RuntimeMoments::of(&self.0).expectation
    }

    fn variance(&self) -> f64 {
        RuntimeMoments::of(&self.0).variance
    }

    /// Monte-Carlo mean, std and censored count over `runs` bit-string runs.
    #[pyo3(signature = (runs, seed=0, cutoff=None))]
    fn simulate(&self, runs: usize, seed: u64, cutoff: Option<u64>) -> PyResult<(f64, f64, usize)> {
        let s = estimate_runtime(&self.0, &Instance::canonical(self.0.n()), runs, seed, cutoff).map_err(to_py)?;
        Ok((s.mean, s.std, s.censored))
    }

    /// One run as a list of (step, fitness_before, radius, fitness_after, reward).
    #[pyo3(signature = (seed=0, cutoff=None))]
    fn trace(&self, seed: u64, cutoff: Option<u64>) -> PyResult<Vec<TraceRow>> {
        let t = run_rls(
            &self.0,
            &Instance::canonical(self.0.n()),
            &mut stream_rng(seed, 0),
            cutoff,
        )
        .map_err(to_py)?;
        Ok(t.steps
            .iter()
            .map(|s| (s.step, s.fitness_before, s.action_radius, s.fitness_after, s.reward))
            .collect())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Policy(n={}, radii={:?})", self.0.n(), self.0.portfolio().radii())
    }
}

/// Reset/step environment; actions index the sorted portfolio.
#[pyclass(name = "Env", module = "lodac")]
struct PyEnv(LeadingOnesEnv);

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (n, radii, cutoff=None, surrogate=false))]
    fn new(n: usize, radii: Vec<usize>, cutoff: Option<u64>, surrogate: bool) -> PyResult<Self> {
        let mut spec = EnvSpec::new(portfolio(n, radii)?);
        if let Some(c) = cutoff {
            spec = spec.with_cutoff(c);
        }
        if surrogate {
            spec = spec.with_backend(Backend::Surrogate);
        }
        Ok(PyEnv(LeadingOnesEnv::new(spec).map_err(to_py)?))
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.0.reset(seed).fitness
    }

    /// Returns (fitness, reward, done, reached_optimum).
    fn step(&mut self, action: usize) -> PyResult<(usize, f64, bool, bool)> {
        let r = self.0.step(action).map_err(to_py)?;
        Ok((
            r.observation.fitness,
            r.reward,
            r.done,
            r.info == Some(Terminal::OptimumFound),
        ))
    }

    #[getter]
    fn fitness(&self) -> usize {
        self.0.fitness()
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.0.steps()
    }
}

#[pyfunction]
fn improvement_probability(r: usize, i: usize, n: usize) -> PyResult<f64> {
    lodac::improvement_probability(r, i, n).map_err(to_py)
}

#[pyfunction]
fn prefers_larger(r: usize, i: usize, n: usize) -> PyResult<bool> {
    lodac::prefers_larger(r, i, n).map_err(to_py)
}

#[pyfunction]
fn optimal_radius(i: usize, n: usize) -> PyResult<usize> {
    lodac::optimal_radius_full(i, n).map_err(to_py)
}

#[pyfunction]
fn family(name: &str, k: usize, n: usize) -> PyResult<Vec<usize>> {
    let kind: FamilyKind = name.parse().map_err(to_py)?;
    Ok(make_portfolio(kind, k, n).map_err(to_py)?.radii().to_vec())
}

/// Best portfolio of size `k` containing radius 1 and its expected runtime.
#[pyfunction]
#[pyo3(signature = (k, n, jobs=1))]
fn optimal_portfolio(py: Python<'_>, k: usize, n: usize, jobs: usize) -> PyResult<(Vec<usize>, f64)> {
    let (p, m) = py.detach(|| search_optimal_portfolio(k, n, jobs)).map_err(to_py)?;
    Ok((p.radii().to_vec(), m.expectation))
}

/// (radii, expected_runtime, normalized) for every portfolio, best first.
#[pyfunction]
#[pyo3(signature = (k, n, require_radius_one=true))]
fn sweep_portfolios(k: usize, n: usize, require_radius_one: bool) -> PyResult<Vec<(Vec<usize>, f64, f64)>> {
    let records = sweep_all_portfolios(k, n, require_radius_one, DEFAULT_SWEEP_CAP).map_err(to_py)?;
    Ok(records
        .into_iter()
        .map(|r| (r.portfolio.radii().to_vec(), r.expected_runtime, r.normalized))
        .collect())
}

/// Runs a TOML experiment config; returns one JSON log per seed.
#[pyfunction]
#[pyo3(signature = (config, out=None, jobs=1))]
fn train_config(py: Python<'_>, config: &str, out: Option<PathBuf>, jobs: usize) -> PyResult<Vec<String>> {
    let config = ExperimentConfig::from_toml_str(config).map_err(to_py)?;
    let logs = py.detach(|| train(&config, jobs, out.as_deref())).map_err(to_py)?;
    logs.iter().map(|l| l.to_json().map_err(to_py)).collect()
}

#[pymodule(name = "lodac")]
fn lodac_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyEnv>()?;
    m.add_function(wrap_pyfunction!(improvement_probability, m)?)?;
    m.add_function(wrap_pyfunction!(prefers_larger, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_radius, m)?)?;
    m.add_function(wrap_pyfunction!(family, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_portfolio, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_portfolios, m)?)?;
    m.add_function(wrap_pyfunction!(train_config, m)?)?;
    Ok(())
}
