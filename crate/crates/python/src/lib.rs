//! Python bindings for `bvfilter`.

use bvfilter::checks::{run_suite, Suite};
use bvfilter::fixtures;
use bvfilter::mollify;
use bvfilter::oracle::kalman_run;
use bvfilter::particle::{run_particle as pf_run, ParticleOptions, DEFAULT_THRESHOLD};
use bvfilter::simulate::{simulate_bundle, Measure, ObservationPath};
use bvfilter::zakai::{self, FilterRun};
use bvfilter::{validate_scenario, ScenarioSpec};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pybvfilter, BvFilterError, PyValueError);

fn err(e: bvfilter::Error) -> PyErr {
    BvFilterError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A validated-on-demand filtering scenario.
#[pyclass(name = "Scenario", module = "pybvfilter", frozen)]
struct PyScenario {
    inner: bvfilter::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: bvfilter::Scenario::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: bvfilter::Scenario::load(&path).map_err(err)?,
        })
    }

    /// Built-in scenario: `ou`, `linear_with_jumps`, `nonlinear_with_jumps` or `unobserved`.
    #[staticmethod]
    #[pyo3(signature = (name, steps = 1000, nodes = 401))]
    fn fixture(name: &str, steps: usize, nodes: usize) -> PyResult<Self> {
        let spec: ScenarioSpec = match name {
            "ou" => fixtures::ou(steps),
            "linear_with_jumps" => fixtures::linear_with_jumps(nodes, steps),
            "nonlinear_with_jumps" => fixtures::nonlinear_with_jumps(nodes, steps),
            "unobserved" => fixtures::unobserved(nodes, steps),
            other => return Err(PyValueError::new_err(format!("unknown fixture '{other}'"))),
        };
        Ok(Self {
            inner: bvfilter::Scenario::from_spec(spec).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.spec().to_json()
    }

    fn with_seed(&self, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_seed(seed).map_err(err)?,
        })
    }

    fn with_steps(&self, steps: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_steps(steps).map_err(err)?,
        })
    }

    /// Violated constraints as `(constraint, message)` pairs; empty when valid.
    fn validate(&self) -> Vec<(String, String)> {
        validate_scenario(&self.inner)
            .violations
            .into_iter()
            .map(|v| (v.constraint, v.message))
            .collect()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.time_grid().steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.time_grid().dt()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, m={}, n={}, steps={})",
            self.inner.spec().name.as_deref().unwrap_or(""),
            self.inner.m(),
            self.inner.n(),
            self.inner.time_grid().steps()
        )
    }
}

/// Observation path `Y` sampled on a uniform time grid.
#[pyclass(name = "ObservationPath", module = "pybvfilter", frozen)]
struct PyObservationPath {
    inner: ObservationPath,
}

#[pymethods]
impl PyObservationPath {
    /// Build from `Y_{t_k}` rows (one row per time node, starting at `t = 0`).
    #[new]
    fn new(dt: f64, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = values.first().map_or(0, Vec::len);
        if values.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("observation rows differ in length"));
        }
        let flat = values.into_iter().flatten().collect();
        Ok(Self {
            inner: ObservationPath::new(n, dt, flat).map_err(err)?,
        })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        (0..=self.inner.steps())
            .map(|k| self.inner.at(k).to_vec())
            .collect()
    }
}

fn parse_measure(name: &str) -> PyResult<Measure> {
    match name {
        "physical" => Ok(Measure::Physical),
        "reference" => Ok(Measure::Reference),
        other => Err(PyValueError::new_err(format!("unknown measure '{other}'"))),
    }
}

/// Sample one replication: times, signal, observation and `log eta`.
#[pyfunction]
#[pyo3(name = "simulate", signature = (scenario, replication = 0, measure = "physical"))]
fn simulate_path<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    replication: u64,
    measure: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let which = parse_measure(measure)?;
    let s = &scenario.inner;
    let b = py
        .detach(|| simulate_bundle(s, replication, which))
        .map_err(err)?;
    let out = PyDict::new(py);
    let signal: Vec<Vec<f64>> = (0..b.signal.len())
        .map(|k| b.signal.at(k).to_vec())
        .collect();
    out.set_item("times", &b.times)?;
    out.set_item("signal", signal)?;
    out.set_item(
        "observation",
        PyObservationPath {
            inner: b.observation,
        },
    )?;
    out.set_item("log_eta", &b.log_eta)?;
    Ok(out)
}

fn grid_run_dict<'py>(py: Python<'py>, run: &FilterRun) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("times", &run.times)?;
    out.set_item("mean", &run.mean)?;
    out.set_item("cov", run.cov.iter().map(rows).collect::<Vec<_>>())?;
    out.set_item("log_mass", &run.log_mass)?;
    out.set_item("pi_h", &run.pi_h)?;
    out.set_item("final_density", &run.final_density.values)?;
    Ok(out)
}

/// Unnormalised grid filter.
#[pyfunction]
fn run_zakai<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    obs: &PyObservationPath,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, y) = (&scenario.inner, &obs.inner);
    let run = py.detach(|| zakai::run_zakai(s, y)).map_err(err)?;
    grid_run_dict(py, &run)
}

/// Normalised grid filter.
#[pyfunction]
fn run_ks<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    obs: &PyObservationPath,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, y) = (&scenario.inner, &obs.inner);
    let run = py.detach(|| zakai::run_ks(s, y)).map_err(err)?;
    grid_run_dict(py, &run)
}

/// Bootstrap particle filter; `seed` defaults to the scenario seed.
#[pyfunction]
#[pyo3(signature = (scenario, obs, particles = 1000, seed = None, replication = 0, threshold = DEFAULT_THRESHOLD))]
fn run_particle<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    obs: &PyObservationPath,
    particles: usize,
    seed: Option<u64>,
    replication: u64,
    threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, y) = (&scenario.inner, &obs.inner);
    let opts = ParticleOptions {
        particles,
        threshold,
        seed: seed.unwrap_or_else(|| s.seed()),
        replication,
        dump_every: None,
    };
    let run = py.detach(|| pf_run(s, y, opts)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("times", &run.times)?;
    out.set_item(
        "mean",
        run.estimates
            .iter()
            .map(|e| e.mean.clone())
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "cov",
        run.estimates
            .iter()
            .map(|e| rows(&e.cov))
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "log_mass",
        run.estimates.iter().map(|e| e.log_mass).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "ess",
        run.estimates.iter().map(|e| e.ess).collect::<Vec<_>>(),
    )?;
    out.set_item("resampled", run.resampled)?;
    Ok(out)
}

/// Kalman-Bucy filter for linear-Gaussian scenarios.
#[pyfunction]
fn run_kalman<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    obs: &PyObservationPath,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, y) = (&scenario.inner, &obs.inner);
    let run = py.detach(|| kalman_run(s, y)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("times", &run.times)?;
    out.set_item(
        "mean",
        run.beliefs
            .iter()
            .map(|b| b.mean.iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "cov",
        run.beliefs.iter().map(|b| rows(&b.cov)).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "log_mass",
        run.beliefs.iter().map(|b| b.log_mass).collect::<Vec<_>>(),
    )?;
    Ok(out)
}

/// Grid log-mass against the closed-form identity driven by the observation.
#[pyfunction]
fn mass_formula_check<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    obs: &PyObservationPath,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, y) = (&scenario.inner, &obs.inner);
    let report = py
        .detach(|| zakai::run_zakai(s, y).and_then(|run| zakai::mass_formula_check(&run, y, s)))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("log_mass_solver", report.log_mass_solver)?;
    out.set_item("log_formula", report.log_formula)?;
    out.set_item("discrepancy", report.discrepancy)?;
    out.set_item("log_formula_corrected", report.log_formula_corrected)?;
    out.set_item("discrepancy_corrected", report.discrepancy_corrected)?;
    Ok(out)
}

/// Gaussian heat kernel `psi_eps(x)`.
#[pyfunction]
fn heat_kernel(x: Vec<f64>, eps: f64) -> PyResult<f64> {
    mollify::heat_kernel(&x, eps).map_err(err)
}

/// Run an invariant suite (`eta`, `mass`, `mollify`, `convergence`).
#[pyfunction]
fn run_checks<'py>(py: Python<'py>, suite: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let suite: Suite = suite.parse().map_err(err)?;
    let results = py.detach(|| run_suite(suite)).map_err(err)?;
    results
        .into_iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("check", c.check)?;
            d.set_item("value", c.value)?;
            d.set_item("lower", c.lower)?;
            d.set_item("upper", c.upper)?;
            d.set_item("pass", c.pass)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pybvfilter(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BvFilterError", m.py().get_type::<BvFilterError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyObservationPath>()?;
    m.add_function(wrap_pyfunction!(simulate_path, m)?)?;
    m.add_function(wrap_pyfunction!(run_zakai, m)?)?;
    m.add_function(wrap_pyfunction!(run_ks, m)?)?;
    m.add_function(wrap_pyfunction!(run_particle, m)?)?;
    m.add_function(wrap_pyfunction!(run_kalman, m)?)?;
    m.add_function(wrap_pyfunction!(mass_formula_check, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    Ok(())
}
