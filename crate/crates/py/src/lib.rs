//! Python bindings: landscapes, Eyring–Kramers predictions, Monte Carlo
//! ensembles and the saddle quadrature check.
//!
//! Structured results cross the boundary as plain Python dicts and lists.

use metastable::kramers::{ek_constant as rs_ek_constant, predict as rs_predict};
use metastable::landscape::{LandscapeConfig, PotentialConfig, SkewConfig};
use metastable::linalg::Bounds;
use metastable::saddlecheck::boundary_asymptotics as rs_boundary_asymptotics;
use metastable::simulate::{self, Ball, SimConfig};
use metastable::topology::{build_valley_structure, default_cells_per_axis, find_critical_points};
use metastable::{CriticalKind, CriticalPoint, LandscapeSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A potential `U` with its skew generator `J`.
#[pyclass(name = "Landscape", frozen, module = "metastable_py")]
struct PyLandscape {
    config: LandscapeConfig,
    spec: LandscapeSpec,
}

impl PyLandscape {
    fn from_config(config: LandscapeConfig) -> PyResult<Self> {
        let spec = config.build().map_err(value_err)?;
        Ok(Self { config, spec })
    }

    fn minimum_near(&self, x: &[f64], seeds_per_axis: usize) -> PyResult<(Vec<CriticalPoint>, CriticalPoint)> {
        let crits = find_critical_points(&self.spec, &self.config.search_box(), seeds_per_axis).map_err(runtime_err)?;
        let m0 = crits
            .iter()
            .filter(|c| c.kind == CriticalKind::Minimum)
            .min_by(|a, b| a.distance(x).total_cmp(&b.distance(x)))
            .cloned()
            .ok_or_else(|| runtime_err("no minimum found in the search box"))?;
        Ok((crits, m0))
    }
}

#[pymethods]
impl PyLandscape {
    /// A bundled potential; `a != 0` adds the planar skew `a·[[0,1],[-1,0]]` (2D only).
    #[staticmethod]
    #[pyo3(signature = (name, a = 0.0))]
    fn builtin(name: &str, a: f64) -> PyResult<Self> {
        let dim = match name {
            "doublewell1d" => 1,
            _ => 2,
        };
        let skew = if a == 0.0 { SkewConfig::Zero } else { SkewConfig::Constant { entries: vec![vec![0.0, a], vec![-a, 0.0]] } };
        Self::from_config(LandscapeConfig {
            name: name.to_string(),
            dim,
            potential: PotentialConfig::Builtin { name: name.to_string() },
            skew: Some(skew),
            bounds: None,
        })
    }

    /// A landscape from the JSON `landscape` section of a run configuration.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::from_config(LandscapeConfig::from_json(text).map_err(value_err)?)
    }

    #[getter]
    fn name(&self) -> &str {
        self.spec.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.spec.value(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.spec.gradient(&x))
    }

    /// `ℓ(x) = J(U(x))∇U(x)`.
    fn ell(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        self.spec.ell(&x).map_err(runtime_err)
    }

    #[pyo3(signature = (seeds_per_axis = 20))]
    fn critical_points<'py>(&self, py: Python<'py>, seeds_per_axis: usize) -> PyResult<Bound<'py, PyAny>> {
        let crits = find_critical_points(&self.spec, &self.config.search_box(), seeds_per_axis).map_err(runtime_err)?;
        to_py(py, &crits)
    }

    /// Eyring–Kramers prediction from the minimum nearest `start` at level `level`.
    #[pyo3(signature = (start, level, epsilons, seeds_per_axis = 20))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        start: Vec<f64>,
        level: f64,
        epsilons: Vec<f64>,
        seeds_per_axis: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        self.check_dim(&start)?;
        let (crits, m0) = self.minimum_near(&start, seeds_per_axis)?;
        let bounds = self.config.search_box();
        let vs = build_valley_structure(&self.spec, &crits, &m0, level, &bounds, default_cells_per_axis(self.spec.dim()))
            .map_err(runtime_err)?;
        let p = rs_predict(&vs, &self.spec, &epsilons).map_err(runtime_err)?;
        to_py(py, &p)
    }

    fn __repr__(&self) -> String {
        format!("Landscape(name={:?}, dim={}, reversible={})", self.spec.name(), self.spec.dim(), self.spec.is_reversible())
    }
}

impl PyLandscape {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.spec.dim() {
            return Err(value_err(format!("expected a point of dimension {}, got {}", self.spec.dim(), x.len())));
        }
        Ok(())
    }
}

/// `{omega, omega_rev, mu, lambda1}` at the index-1 saddle `saddle`.
#[pyfunction]
#[pyo3(signature = (landscape, saddle, toward_home = None))]
fn ek_constant<'py>(
    py: Python<'py>,
    landscape: &PyLandscape,
    saddle: Vec<f64>,
    toward_home: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    landscape.check_dim(&saddle)?;
    let cp = CriticalPoint::at(&landscape.spec, saddle).map_err(runtime_err)?;
    let c = rs_ek_constant(&cp, &landscape.spec, toward_home.as_deref()).map_err(runtime_err)?;
    to_py(py, &serde_json::json!({ "location": c.location, "lambda1": c.lambda1, "mu": c.mu, "omega": c.omega, "omega_rev": c.omega_rev }))
}

#[allow(clippy::too_many_arguments)]
fn sim_config(epsilon: f64, dt: f64, n_traj: usize, seed: u64, t_max: f64, guard_radius: Option<f64>, adjoint: bool) -> SimConfig {
    let mut cfg = SimConfig::new(epsilon, dt, n_traj, seed);
    cfg.t_max = t_max;
    cfg.guard_radius = guard_radius;
    cfg.adjoint = adjoint;
    cfg
}

fn balls(spec: &[(Vec<f64>, f64)]) -> Vec<Ball> {
    spec.iter().map(|(c, r)| Ball::new(c.clone(), *r)).collect()
}

/// Hitting times of `targets` (a list of `(center, radius)`) from `start`.
#[pyfunction]
#[pyo3(signature = (landscape, start, targets, epsilon, dt = 1e-3, n_traj = 1000, seed = 42, t_max = 1e4, guard_radius = None, adjoint = false))]
#[allow(clippy::too_many_arguments)]
fn run_ensemble<'py>(
    py: Python<'py>,
    landscape: &PyLandscape,
    start: Vec<f64>,
    targets: Vec<(Vec<f64>, f64)>,
    epsilon: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    t_max: f64,
    guard_radius: Option<f64>,
    adjoint: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(epsilon, dt, n_traj, seed, t_max, guard_radius, adjoint);
    let targets = balls(&targets);
    let spec = &landscape.spec;
    let r = py.detach(|| simulate::run_ensemble(&start, &targets, spec, &cfg)).map_err(runtime_err)?;
    to_py(py, &r)
}

/// Monte Carlo estimate of `P_x[τ_A < τ_B]`.
#[pyfunction]
#[pyo3(signature = (landscape, x, a, b, epsilon, dt = 1e-3, n_traj = 1000, seed = 42, t_max = 1e4, guard_radius = None))]
#[allow(clippy::too_many_arguments)]
fn equilibrium_potential<'py>(
    py: Python<'py>,
    landscape: &PyLandscape,
    x: Vec<f64>,
    a: Vec<(Vec<f64>, f64)>,
    b: Vec<(Vec<f64>, f64)>,
    epsilon: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    t_max: f64,
    guard_radius: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(epsilon, dt, n_traj, seed, t_max, guard_radius, false);
    let (a, b) = (balls(&a), balls(&b));
    let spec = &landscape.spec;
    let est = py.detach(|| simulate::equilibrium_potential(&x, &a, &b, spec, &cfg)).map_err(runtime_err)?;
    to_py(py, &est)
}

/// Occupation histogram of one long trajectory against the Gibbs density on `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (landscape, epsilon, start, lo, hi, bins = 50, burn_in = 100.0, duration = 2e4, dt = 1e-3, seed = 42, guard_radius = None))]
#[allow(clippy::too_many_arguments)]
fn gibbs_histogram<'py>(
    py: Python<'py>,
    landscape: &PyLandscape,
    epsilon: f64,
    start: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    bins: usize,
    burn_in: f64,
    duration: f64,
    dt: f64,
    seed: u64,
    guard_radius: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(epsilon, dt, 1, seed, 10.0 * dt, guard_radius, false);
    let bounds = Bounds::new(lo, hi);
    if !bounds.is_valid() {
        return Err(value_err("histogram box needs lo < hi in every coordinate"));
    }
    let spec = &landscape.spec;
    let h = py
        .detach(|| simulate::gibbs_histogram(spec, &cfg, &start, burn_in, duration, &bounds, bins))
        .map_err(runtime_err)?;
    to_py(py, &h)
}

/// `(I₁ - I₂)/(α̃_ε ω)` on the face of the saddle box along a decreasing ladder (2D).
#[pyfunction]
#[pyo3(signature = (landscape, saddle, toward_home, ladder, j_box = 4.0))]
fn boundary_asymptotics<'py>(
    py: Python<'py>,
    landscape: &PyLandscape,
    saddle: Vec<f64>,
    toward_home: Vec<f64>,
    ladder: Vec<f64>,
    j_box: f64,
) -> PyResult<Bound<'py, PyAny>> {
    landscape.check_dim(&saddle)?;
    let cp = CriticalPoint::at(&landscape.spec, saddle).map_err(runtime_err)?;
    let t = rs_boundary_asymptotics(&landscape.spec, &cp, Some(&toward_home), &ladder, j_box).map_err(runtime_err)?;
    to_py(py, &t)
}

/// Runs the command-line tool with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("metastable".to_string()).chain(args).collect();
    py.detach(|| metastable::cli::run(argv))
}

#[pymodule]
fn metastable_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLandscape>()?;
    m.add_function(wrap_pyfunction!(ek_constant, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_potential, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_asymptotics, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("RNG", simulate::RNG_DESCRIPTION)?;
    Ok(())
}
