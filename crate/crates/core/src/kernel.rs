//! Newton-type corrections and the simplified (frozen-matrix) fixed-point
//! iteration `u_{j+1} = u_j - M(x_n)^-1 f(u_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor};
use crate::problem::Problem;

/// Default cap on simplified sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 200;

/// The correction `delta = -M(x)^-1 f(x)` and its Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub delta: Vec<f64>,
    pub alpha: f64,
}

impl Correction {
    pub fn from_delta(delta: Vec<f64>) -> Self {
        let alpha = linalg::norm2(&delta);
        Self { delta, alpha }
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue(what))
    }
}

/// Computes `-M(x)^-1 f(x)` with `handle` factorizing `M(x)`.
pub fn correction<P: Problem + ?Sized>(problem: &P, x: &[f64], handle: &LuFactor) -> Result<Correction> {
    let f = problem.eval_f(x)?;
    check_finite(&f, "residual")?;
    let mut delta = handle.solve(&f)?;
    for d in &mut delta {
        *d = -*d;
    }
    check_finite(&delta, "correction")?;
    Ok(Correction::from_delta(delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedRunResult {
    /// Last iterate; the zero candidate when `converged`.
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `alpha_j = ||M(x_n)^-1 f(u_j)||` for every sweep performed.
    pub residual_history: Vec<f64>,
}

/// Runs the simplified Newton-type iteration from `x_n` with the frozen
/// factorization of `M(x_n)`.
///
/// Sweep `j` evaluates `alpha_j` at `u_j`; the run stops with
/// `converged = true` once `alpha_j <= eps`, or with `converged = false`
/// after `max_sweeps` sweeps. An iterate farther than `guard_radius` from
/// `x_n` is reported as [`Error::GuardViolation`].
pub fn simplified_iterate<P: Problem + ?Sized>(
    problem: &P,
    x_n: &[f64],
    frozen: &LuFactor,
    eps: f64,
    max_sweeps: usize,
    guard_radius: f64,
) -> Result<SimplifiedRunResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(guard_radius > 0.0) {
        return Err(Error::InvalidArgument(format!("guard radius must be positive, got {guard_radius}")));
    }
    let n = x_n.len();
    let guard_sq = guard_radius * guard_radius;
    let mut u = x_n.to_vec();
    let mut f = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut history = Vec::with_capacity(32);
    loop {
        problem.eval_f_into(&u, &mut f)?;
        frozen.solve_into(&f, &mut delta)?;
        let alpha = linalg::norm2(&delta);
        if !alpha.is_finite() {
            // a non-finite residual poisons the solve; report whichever came first
            check_finite(&f, "residual")?;
            return Err(Error::NonFiniteValue("correction"));
        }
        if alpha <= eps {
            return Ok(SimplifiedRunResult {
                point: u,
                iterations: history.len(),
                converged: true,
                residual_history: history,
            });
        }
        if history.len() >= max_sweeps {
            return Ok(SimplifiedRunResult {
                point: u,
                iterations: history.len(),
                converged: false,
                residual_history: history,
            });
        }
        history.push(alpha);
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui -= di;
        }
        let dist_sq: f64 = u.iter().zip(x_n).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist_sq > guard_sq {
            let distance = dist_sq.sqrt();
            return Err(Error::GuardViolation { sweeps: history.len(), distance, radius: guard_radius, point: u });
        }
    }
}
