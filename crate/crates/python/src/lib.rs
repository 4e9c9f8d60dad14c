//! Python bindings for the `newton_switch` solver.
//!
//! Build with `cargo build --release -p newton-switch-py --features
//! extension-module` and copy the shared library to `newton_switch.so`.

use ::newton_switch as ns;
use ns::problem::SharedProblem;
use ns::{certificate, output, GridSpec, Mode};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn py_err(e: ns::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    s.parse().map_err(py_err)
}

fn grid(res: (usize, usize), bounds: (f64, f64, f64, f64)) -> PyResult<GridSpec> {
    GridSpec::new([bounds.0, bounds.1, bounds.2, bounds.3], res.0, res.1).map_err(py_err)
}

/// A built-in test problem (`z6m1`, `z3m1`, `circle`).
#[pyclass(frozen)]
struct Problem {
    inner: SharedProblem,
}

#[pymethods]
impl Problem {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(Self { inner: ns::builtin(id).map_err(py_err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn known_zeros(&self) -> Vec<Vec<f64>> {
        self.inner.known_zeros().to_vec()
    }

    fn eval_f(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval_f(&x).map_err(py_err)
    }

    /// Jacobian as a list of rows.
    fn eval_jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.eval_jacobian(&x).map_err(py_err)?.rows())
    }

    fn __repr__(&self) -> String {
        format!("Problem('{}')", self.inner.name())
    }
}

#[pyclass(frozen)]
struct SolverConfig {
    inner: ns::SolverConfig,
}

#[pymethods]
impl SolverConfig {
    #[new]
    #[pyo3(signature = (mode="AS", tau=None, eps=None, t_lower=None, max_outer=None, strict_algorithm1=false, guard_scale=1.0))]
    fn new(
        mode: &str,
        tau: Option<f64>,
        eps: Option<f64>,
        t_lower: Option<f64>,
        max_outer: Option<usize>,
        strict_algorithm1: bool,
        guard_scale: f64,
    ) -> PyResult<Self> {
        let mut cfg = ns::SolverConfig::for_mode(parse_mode(mode)?);
        if let Some(tau) = tau {
            cfg.step.tau = tau;
        }
        if let Some(eps) = eps {
            cfg.eps = eps;
            cfg.simplified_eps = eps;
        }
        if let Some(t) = t_lower {
            cfg.step.t_lower = t;
        }
        if let Some(m) = max_outer {
            cfg.max_outer = m;
        }
        cfg.strict_algorithm1 = strict_algorithm1;
        cfg.guard_scale = guard_scale;
        cfg.validate().map_err(py_err)?;
        Ok(Self { inner: cfg })
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.effective_step().tau
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    fn __repr__(&self) -> String {
        format!("SolverConfig(mode='{}', tau={}, eps={})", self.inner.mode, self.tau(), self.inner.eps)
    }
}

fn config_or_default(config: Option<&SolverConfig>) -> ns::SolverConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

#[pyclass(frozen)]
struct SolveTrace {
    inner: ns::SolveTrace,
}

#[pymethods]
impl SolveTrace {
    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn outcome(&self) -> String {
        format!("{:?}", self.inner.outcome)
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }

    #[getter]
    fn zero(&self) -> Option<Vec<f64>> {
        self.inner.zero.clone()
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.inner.outer_iterations
    }

    #[getter]
    fn simplified_sweeps(&self) -> usize {
        self.inner.simplified_sweeps
    }

    #[getter]
    fn switched_at(&self) -> Option<usize> {
        self.inner.switched_at
    }

    #[getter]
    fn steps(&self) -> Vec<f64> {
        self.inner.steps.clone()
    }

    #[getter]
    fn counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("f_evals", self.inner.f_evals)?;
        d.set_item("j_evals", self.inner.j_evals)?;
        d.set_item("factorizations", self.inner.factorizations)?;
        d.set_item("j_evals_after_switch", self.inner.j_evals_after_switch)?;
        d.set_item("factorizations_after_switch", self.inner.factorizations_after_switch)?;
        Ok(d)
    }

    /// `(alpha, omega_hat, kappa, verdict)` per certificate evaluation.
    #[getter]
    fn certificates(&self) -> Vec<(f64, f64, f64, bool)> {
        self.inner.certificates.iter().map(|c| (c.alpha, c.omega_hat, c.kappa, c.verdict)).collect()
    }

    /// The full trace as a JSON document.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveTrace(mode='{}', outcome='{:?}', outer_iterations={})",
            self.inner.mode, self.inner.outcome, self.inner.outer_iterations
        )
    }
}

#[pyfunction]
#[pyo3(signature = (problem, x0, config=None))]
fn solve(problem: &Problem, x0: Vec<f64>, config: Option<&SolverConfig>) -> PyResult<SolveTrace> {
    let trace = ns::solve(&problem.inner, &x0, &config_or_default(config)).map_err(py_err)?;
    Ok(SolveTrace { inner: trace })
}

#[pyfunction]
fn verdict(alpha: f64, omega_hat: f64, kappa: f64) -> bool {
    certificate::verdict(alpha, omega_hat, kappa)
}

/// `(R, r)` or `None` when the certificate fails.
#[pyfunction]
fn radii(kappa: f64, omega: f64, alpha: f64) -> Option<(f64, f64)> {
    certificate::radii(kappa, omega, alpha)
}

/// Lipschitz estimate between `x_n` and `x_next` with `M = J(x_n)`.
#[pyfunction]
fn estimate_omega_hat(problem: &Problem, x_n: Vec<f64>, x_next: Vec<f64>) -> PyResult<f64> {
    let p = &problem.inner;
    let jac_n = p.eval_jacobian(&x_n).map_err(py_err)?;
    let jac_next = p.eval_jacobian(&x_next).map_err(py_err)?;
    let lu = ns::LuFactor::new(&jac_n).map_err(py_err)?;
    certificate::estimate_omega_hat(&lu, &jac_next, &jac_n, &x_next, &x_n).map_err(py_err)
}

#[pyfunction]
fn correct_zero_of(problem: &Problem, x0: Vec<f64>) -> PyResult<usize> {
    ns::correct_zero_of(&x0, &problem.inner).map_err(py_err)
}

#[pyclass(frozen)]
struct BasinReport {
    inner: ns::BasinReport,
}

#[pymethods]
impl BasinReport {
    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn correct_fraction(&self) -> f64 {
        self.inner.correct_fraction
    }

    #[getter]
    fn convergent_fraction(&self) -> f64 {
        self.inner.convergent_fraction
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.inner.wall_time
    }

    /// Zero index per lattice point (row by row, y increasing).
    #[getter]
    fn zero_indices(&self) -> Vec<Option<usize>> {
        self.inner.points.iter().map(|p| p.zero_index).collect()
    }

    #[getter]
    fn correct(&self) -> Vec<bool> {
        self.inner.points.iter().map(|p| p.correct).collect()
    }

    /// Binary PPM rendering of the basins.
    fn ppm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &output::encode_ppm(&output::BasinImage::from_report(&self.inner)))
    }

    fn csv(&self) -> String {
        output::encode_csv_stats(&output::StatsTable::from(&self.inner))
    }
}

#[pyfunction]
#[pyo3(signature = (problem, res=(200, 200), bounds=(-3.0, 3.0, -3.0, 3.0), config=None, workers=1))]
fn basin_scan(
    py: Python<'_>,
    problem: &Problem,
    res: (usize, usize),
    bounds: (f64, f64, f64, f64),
    config: Option<&SolverConfig>,
    workers: usize,
) -> PyResult<BasinReport> {
    let g = grid(res, bounds)?;
    let cfg = config_or_default(config);
    let report = py.detach(|| ns::basin_scan(&problem.inner, &g, &cfg, workers)).map_err(py_err)?;
    Ok(BasinReport { inner: report })
}

/// `(x, y, vx, vy, singular)`.
type FieldRow = (f64, f64, f64, f64, bool);

/// One [`FieldRow`] per lattice point.
#[pyfunction]
#[pyo3(signature = (problem, res=(20, 20), bounds=(-3.0, 3.0, -3.0, 3.0), transformed=false))]
fn direction_field(
    problem: &Problem,
    res: (usize, usize),
    bounds: (f64, f64, f64, f64),
    transformed: bool,
) -> PyResult<Vec<FieldRow>> {
    let g = grid(res, bounds)?;
    let samples = ns::direction_field(&problem.inner, &g, transformed).map_err(py_err)?;
    Ok(samples.iter().map(|s| (s.point[0], s.point[1], s.vector[0], s.vector[1], s.singular)).collect())
}

/// `{mode: (correct_fraction, relative_complexity)}` for the four modes.
#[pyfunction]
#[pyo3(signature = (problem, res=(200, 200), bounds=(-3.0, 3.0, -3.0, 3.0), config=None))]
fn table1<'py>(
    py: Python<'py>,
    problem: &Problem,
    res: (usize, usize),
    bounds: (f64, f64, f64, f64),
    config: Option<&SolverConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let g = grid(res, bounds)?;
    let cfg = config_or_default(config);
    let table = py.detach(|| ns::table1(&problem.inner, &g, &cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    for c in &table.columns {
        d.set_item(c.mode.to_string(), (c.correct_fraction, c.relative_complexity))?;
    }
    Ok(d)
}

#[pymodule(name = "newton_switch")]
fn newton_switch_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<SolverConfig>()?;
    m.add_class::<SolveTrace>()?;
    m.add_class::<BasinReport>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verdict, m)?)?;
    m.add_function(wrap_pyfunction!(radii, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_omega_hat, m)?)?;
    m.add_function(wrap_pyfunction!(correct_zero_of, m)?)?;
    m.add_function(wrap_pyfunction!(basin_scan, m)?)?;
    m.add_function(wrap_pyfunction!(direction_field, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    Ok(())
}
