//! Python bindings for the `brinkman` crate.
//!
//! Fields cross the boundary as flat lists in row-major cell order; runs
//! are driven by the same TOML configs the command-line tool reads.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use brinkman::config::RunConfig;
use brinkman::grid::ScalarField;
use brinkman::harness::{convergence_sweep, monotonicity_violations};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Periodic box `[0, extent)^dim` with `n_cells` cells per axis.
#[pyclass(name = "Grid", frozen)]
#[derive(Clone)]
struct PyGrid(brinkman::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, extent: f64, n_cells: usize) -> PyResult<Self> {
        brinkman::Grid::new(dim, extent, n_cells).map(Self).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn extent(&self) -> f64 {
        self.0.extent()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Cell centers as `(x, y)` pairs; `y` is 0 in 1D.
    fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.0.len())
            .map(|i| {
                let c = self.0.center(i);
                (c[0], c[1])
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dim={}, extent={}, n_cells={})",
            self.0.dim(),
            self.0.extent(),
            self.0.n_cells()
        )
    }
}

/// Growth law `G` with the derived maps `H`, `omega` and the exact reaction step.
#[pyclass(name = "GrowthLaw", frozen)]
#[derive(Clone)]
struct PyGrowthLaw(brinkman::GrowthLaw);

#[pymethods]
impl PyGrowthLaw {
    #[staticmethod]
    fn linear(alpha: f64, p_max: f64) -> PyResult<Self> {
        brinkman::GrowthLaw::linear(alpha, p_max).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn cubic_perturbed(alpha: f64, p_max: f64, s: f64) -> PyResult<Self> {
        brinkman::GrowthLaw::cubic_perturbed(alpha, p_max, s)
            .map(Self)
            .map_err(value_err)
    }

    /// Monotone cubic through `(nodes, values)`.
    #[staticmethod]
    fn from_table(alpha: f64, p_max: f64, nodes: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        brinkman::GrowthLaw::from_table(alpha, p_max, nodes, values)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }

    #[getter]
    fn p_max(&self) -> f64 {
        self.0.p_max()
    }

    fn g(&self, p: f64) -> f64 {
        self.0.g(p)
    }

    fn h_inverse(&self, w: f64) -> PyResult<f64> {
        self.0.h_inverse(w).map_err(value_err)
    }

    fn omega_exact(&self, xi: f64, t: f64) -> f64 {
        self.0.omega_exact(xi, t)
    }

    fn reaction_step(&self, p0: f64, w: f64, k: f64, dt: f64) -> f64 {
        self.0.exact_reaction_step(p0, w, k, dt)
    }
}

/// Solves `-nu Lap_h W + W = p` on `grid`.
#[pyfunction]
#[pyo3(signature = (grid, p, nu = 1.0, tol = 1e-12))]
fn solve_brinkman(grid: &PyGrid, p: Vec<f64>, nu: f64, tol: f64) -> PyResult<Vec<f64>> {
    let p = ScalarField::new(grid.0, p).map_err(value_err)?;
    let (w, _) = brinkman::solve_brinkman(&p, nu, tol).map_err(runtime_err)?;
    Ok(w.into_values())
}

/// One stored time of a run. `theta` is empty for k-level runs and `n`
/// is the indicator of the region for limit runs.
#[pyclass(name = "Snapshot", frozen, get_all)]
struct PySnapshot {
    t: f64,
    p: Vec<f64>,
    n: Vec<f64>,
    w: Vec<f64>,
    theta: Vec<f64>,
}

#[pymethods]
impl PySnapshot {
    fn __repr__(&self) -> String {
        format!("Snapshot(t={}, cells={})", self.t, self.p.len())
    }
}

fn parse(config: &str) -> PyResult<RunConfig> {
    RunConfig::from_toml(config).map_err(value_err)
}

/// Runs the finite-k system described by a TOML config string.
#[pyfunction]
fn run_klevel(config: &str) -> PyResult<Vec<PySnapshot>> {
    let (cfg, times) = parse(config)?.klevel_config().map_err(value_err)?;
    let run = brinkman::run_klevel(&cfg, &times).map_err(runtime_err)?;
    Ok(run
        .snapshots
        .into_iter()
        .map(|s| PySnapshot {
            t: s.t,
            p: s.p.into_values(),
            n: s.n.into_values(),
            w: s.w.into_values(),
            theta: Vec::new(),
        })
        .collect())
}

/// Runs the limit free-boundary system described by a TOML config string.
#[pyfunction]
fn run_limit(config: &str) -> PyResult<Vec<PySnapshot>> {
    let (cfg, times) = parse(config)?.limit_config().map_err(value_err)?;
    let states = brinkman::run_limit(cfg, &times).map_err(runtime_err)?;
    Ok(states
        .into_iter()
        .map(|s| PySnapshot {
            t: s.t,
            p: s.p.into_values(),
            n: s.n.into_values(),
            w: s.w.into_values(),
            theta: s.theta.into_values(),
        })
        .collect())
}

/// Convergence sweep; returns `(report_csv, monotonicity_violations)`.
#[pyfunction]
#[pyo3(signature = (config, ks = None, times = None, delta = None))]
fn converge(
    config: &str,
    ks: Option<Vec<f64>>,
    times: Option<Vec<f64>>,
    delta: Option<f64>,
) -> PyResult<(String, Vec<String>)> {
    let mut cfg = parse(config)?;
    let h = cfg
        .harness
        .as_mut()
        .ok_or_else(|| PyValueError::new_err("config has no [harness] section"))?;
    if let Some(ks) = ks {
        h.ks = ks;
    }
    if let Some(times) = times {
        h.times = times;
    }
    if delta.is_some() {
        h.delta = delta;
    }
    let (setup, h) = cfg.sweep_setup().map_err(value_err)?;
    let delta = h.delta.unwrap_or_default();
    let report = convergence_sweep(&setup, &h.ks, &h.times, delta).map_err(runtime_err)?;
    Ok((report.to_csv(), monotonicity_violations(&report, h.slack)))
}

/// Runs the built-in checks; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn selftest(seed: u64) -> Vec<(String, bool, String)> {
    brinkman::selftest::run_selftest(seed)
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn brinkman_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGrowthLaw>()?;
    m.add_class::<PySnapshot>()?;
    m.add_function(wrap_pyfunction!(solve_brinkman, m)?)?;
    m.add_function(wrap_pyfunction!(run_klevel, m)?)?;
    m.add_function(wrap_pyfunction!(run_limit, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("REPORT_HEADER", brinkman::harness::REPORT_HEADER)?;
    Ok(())
}
