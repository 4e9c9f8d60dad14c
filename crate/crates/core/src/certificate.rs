//! Computable switch certificate for the simplified Newton phase.
//!
//! With `alpha = ||M(x_n)^-1 f(x_n)||`, an affine-covariant Lipschitz
//! estimate `omega` and the approximation defect `kappa = ||Id - M^-1 J||`,
//! the frozen-matrix map `g(v) = v - M(x_n)^-1 f(v)` maps the ball
//! `B_R(x_n)` into itself and contracts there as soon as
//! `alpha * omega <= (1 - kappa)^2 / 2`. `R` and `r` are the two roots of
//! `omega/2 rho^2 - (1 - kappa) rho + alpha = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::{self, LuFactor, Matrix};
use crate::problem::{MatrixPolicy, Problem};

/// Power iterations used by [`estimate_kappa`].
pub const KAPPA_POWER_ITERATIONS: usize = 5;

// systems up to this size keep the omega workspace on the stack
const SMALL_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchCertificate {
    pub omega_hat: f64,
    pub kappa: f64,
    pub alpha: f64,
    #[serde(rename = "R")]
    pub radius_big: Option<f64>,
    #[serde(rename = "r")]
    pub radius_small: Option<f64>,
    pub verdict: bool,
}

impl SwitchCertificate {
    pub fn new(alpha: f64, omega_hat: f64, kappa: f64) -> Self {
        let verdict = verdict(alpha, omega_hat, kappa);
        let (radius_big, radius_small) = match radii(kappa, omega_hat, alpha) {
            Some((big, small)) => (Some(big), Some(small)),
            None => (None, None),
        };
        Self { omega_hat, kappa, alpha, radius_big, radius_small, verdict }
    }

    /// Contraction factor bound `kappa + omega * R / 2` on `B_R(x_n)`.
    pub fn contraction_bound(&self) -> Option<f64> {
        self.radius_big.map(|r| self.kappa + 0.5 * self.omega_hat * r)
    }
}

/// `alpha * omega_hat <= (1 - kappa)^2 / 2`.
pub fn verdict(alpha: f64, omega_hat: f64, kappa: f64) -> bool {
    if !(kappa < 1.0) || !alpha.is_finite() || !omega_hat.is_finite() {
        return false;
    }
    let one_minus = 1.0 - kappa;
    // same expression as the discriminant sign test in `radii`
    one_minus * one_minus - 2.0 * (alpha * omega_hat) >= 0.0
}

/// Both roots `(R, r)` of `omega/2 rho^2 - (1 - kappa) rho + alpha = 0`,
/// or `None` when the discriminant is negative.
///
/// `omega = 0` gives `R = inf` and `r = alpha / (1 - kappa)`, the limits
/// of the two roots.
pub fn radii(kappa: f64, omega: f64, alpha: f64) -> Option<(f64, f64)> {
    if !verdict(alpha, omega, kappa) || omega < 0.0 || alpha < 0.0 {
        return None;
    }
    let one_minus = 1.0 - kappa;
    let disc = (one_minus * one_minus - 2.0 * (alpha * omega)).max(0.0);
    let root = disc.sqrt();
    let sum_term = one_minus + root;
    let big = if omega == 0.0 { f64::INFINITY } else { sum_term / omega };
    // product form r = 2 alpha / (omega R) avoids cancellation for small alpha
    let small = 2.0 * alpha / sum_term;
    Some((big, small))
}

/// Affine-covariant Lipschitz estimate
/// `||M(x_n)^-1 (J(x_next) - J(x_n)) (x_next - x_n)|| / ||x_next - x_n||^2`.
pub fn estimate_omega_hat(
    handle_at_xn: &LuFactor,
    jac_next: &Matrix,
    jac_n: &Matrix,
    x_next: &[f64],
    x_n: &[f64],
) -> Result<f64> {
    let n = x_n.len();
    for got in [x_next.len(), jac_next.dim(), jac_n.dim(), handle_at_xn.dim()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    if n == 2 {
        let (mut step, mut diff, mut w) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        omega_with(handle_at_xn, jac_next, jac_n, x_next, x_n, &mut step, &mut diff, &mut w)
    } else if n <= SMALL_DIM {
        let (mut step, mut diff, mut w) = ([0.0; SMALL_DIM], [0.0; SMALL_DIM], [0.0; SMALL_DIM]);
        omega_with(handle_at_xn, jac_next, jac_n, x_next, x_n, &mut step[..n], &mut diff[..n], &mut w[..n])
    } else {
        let (mut step, mut diff, mut w) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        omega_with(handle_at_xn, jac_next, jac_n, x_next, x_n, &mut step, &mut diff, &mut w)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn omega_with(
    handle_at_xn: &LuFactor,
    jac_next: &Matrix,
    jac_n: &Matrix,
    x_next: &[f64],
    x_n: &[f64],
    step: &mut [f64],
    diff: &mut [f64],
    w: &mut [f64],
) -> Result<f64> {
    let n = step.len();
    let mut step_sq = 0.0;
    let mut scale_sq: f64 = 0.0;
    for i in 0..n {
        step[i] = x_next[i] - x_n[i];
        step_sq += step[i] * step[i];
        scale_sq += x_n[i] * x_n[i];
    }
    if step_sq <= 1e-28 * scale_sq.max(1.0) {
        return Err(Error::DegenerateStep { step_norm: step_sq.sqrt() });
    }
    let (a, b) = (jac_next.as_slice(), jac_n.as_slice());
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            acc += (a[i * n + k] - b[i * n + k]) * step[k];
        }
        diff[i] = acc;
    }
    handle_at_xn.solve_into(diff, w)?;
    let value = linalg::norm2(w) / step_sq;
    if !value.is_finite() {
        return Err(Error::NonFiniteValue("omega estimate"));
    }
    Ok(value)
}

/// Estimate of `||Id - M(x)^-1 J||` in the Euclidean operator norm.
///
/// `CurrentJacobian` short-circuits to exactly zero. Other policies form
/// `B = Id - M^-1 J` column by column through the factorization and run
/// a few power iterations on `B^T B`. An estimate `>= 1` is returned as
/// [`Error::EstimateOverflow`].
pub fn estimate_kappa(policy: &MatrixPolicy, handle: &LuFactor, jac_at_x: &Matrix) -> Result<f64> {
    if matches!(policy, MatrixPolicy::CurrentJacobian) {
        return Ok(0.0);
    }
    let n = jac_at_x.dim();
    let mut defect = Matrix::zeros(n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = jac_at_x.get(i, j);
        }
        let solved = handle.solve(&col)?;
        for i in 0..n {
            defect.set(i, j, if i == j { 1.0 } else { 0.0 } - solved[i]);
        }
    }
    let estimate = spectral_norm_estimate(&defect, KAPPA_POWER_ITERATIONS);
    if !estimate.is_finite() {
        return Err(Error::NonFiniteValue("kappa estimate"));
    }
    if estimate >= 1.0 {
        return Err(Error::EstimateOverflow { estimate });
    }
    Ok(estimate)
}

fn spectral_norm_estimate(b: &Matrix, iterations: usize) -> f64 {
    let n = b.dim();
    let bt = b.transpose();
    // start from the largest column: ||B e_j|| is already a lower bound
    let (j_max, col_norm) = (0..n)
        .map(|j| (j, (0..n).map(|i| b.get(i, j).powi(2)).sum::<f64>().sqrt()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if col_norm == 0.0 {
        return 0.0;
    }
    let mut v = vec![0.0; n];
    v[j_max] = 1.0;
    let mut estimate = col_norm;
    for _ in 0..iterations {
        let w = bt.mul_vec(&b.mul_vec(&v));
        let norm = linalg::norm2(&w);
        if norm == 0.0 {
            break;
        }
        v = w.iter().map(|x| x / norm).collect();
        estimate = estimate.max(linalg::norm2(&b.mul_vec(&v)));
    }
    estimate
}

/// Outcome of sampling the self-map and contraction properties of the
/// frozen map on `B_R(x_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledVerification {
    pub samples: usize,
    pub radius: f64,
    pub contraction_bound: f64,
    /// Samples with `||g(x) - x_n|| > R`.
    pub self_map_violations: usize,
    /// Pairs with `||g(x) - g(y)|| > (kappa + omega R / 2) ||x - y||`.
    pub contraction_violations: usize,
    /// Samples where the pointwise defect `||Id - M^-1 J(x)||` (lower
    /// estimate) exceeds the certificate's `kappa`.
    pub kappa_violations: usize,
    /// Largest observed `||g(x) - g(y)|| / ||x - y||`.
    pub max_lipschitz_quotient: f64,
    /// Largest observed `||g(x) - x_n|| / R`.
    pub max_self_map_ratio: f64,
}

impl SampledVerification {
    pub fn violations(&self) -> usize {
        self.self_map_violations + self.contraction_violations
    }
}

const SAMPLE_REL_TOL: f64 = 1e-9;

fn sample_in_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    loop {
        let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = linalg::norm2(&dir);
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let rho = radius * u.powf(1.0 / n as f64);
        return center.iter().zip(&dir).map(|(c, d)| c + rho * d / norm).collect();
    }
}

/// Draws `samples` uniform pairs `(x, y)` from `B_R(x_n)` and checks
/// `||g(x) - x_n|| <= R` and
/// `||g(x) - g(y)|| <= (kappa + omega_hat R / 2) ||x - y||`, both with a
/// relative slack of `1e-9`. `frozen` must factorize `M(x_n)`.
///
/// Violations are data: they falsify the certificate's estimates.
pub fn verify_certificate_sampled<P: Problem + ?Sized>(
    problem: &P,
    x_n: &[f64],
    cert: &SwitchCertificate,
    frozen: &LuFactor,
    samples: usize,
    seed: u64,
) -> Result<SampledVerification> {
    let radius = match cert.radius_big {
        Some(r) if r.is_finite() && r > 0.0 => r,
        _ => {
            return Err(Error::InvalidArgument(
                "certificate carries no finite positive radius to sample".into(),
            ))
        }
    };
    let bound = cert.kappa + 0.5 * cert.omega_hat * radius;
    let g = |v: &[f64]| -> Result<Vec<f64>> {
        let c = kernel::correction(problem, v, frozen)?;
        Ok(linalg::axpy(v, 1.0, &c.delta))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SampledVerification {
        samples,
        radius,
        contraction_bound: bound,
        self_map_violations: 0,
        contraction_violations: 0,
        kappa_violations: 0,
        max_lipschitz_quotient: 0.0,
        max_self_map_ratio: 0.0,
    };
    for _ in 0..samples {
        let x = sample_in_ball(&mut rng, x_n, radius);
        let y = sample_in_ball(&mut rng, x_n, radius);
        let gx = g(&x)?;
        let gy = g(&y)?;

        let reach = linalg::dist2(&gx, x_n);
        report.max_self_map_ratio = report.max_self_map_ratio.max(reach / radius);
        if reach > radius * (1.0 + SAMPLE_REL_TOL) {
            report.self_map_violations += 1;
        }

        let dxy = linalg::dist2(&x, &y);
        let dg = linalg::dist2(&gx, &gy);
        if dxy > 0.0 {
            report.max_lipschitz_quotient = report.max_lipschitz_quotient.max(dg / dxy);
        }
        if dg > bound * dxy * (1.0 + SAMPLE_REL_TOL) {
            report.contraction_violations += 1;
        }

        let jac = problem.eval_jacobian(&x)?;
        let local = match estimate_kappa(&MatrixPolicy::Identity, frozen, &jac) {
            Ok(k) => k,
            Err(Error::EstimateOverflow { estimate }) => estimate,
            Err(e) => return Err(e),
        };
        if local > cert.kappa * (1.0 + SAMPLE_REL_TOL) + SAMPLE_REL_TOL {
            report.kappa_violations += 1;
        }
    }
    Ok(report)
}
