//! Predictor/corrector step-size control for the damped phase
//! `x_{n+1} = x_n + t_n delta_n`.
//!
//! The controller compares the explicit Euler step of the Newton flow
//! `x' = F(x) = -M(x)^-1 f(x)` against a trapezoidal (Heun) step built from
//! one extra evaluation of `F` at the trial point. The trial `t` starts at
//! `min(1, growth * prev_t)` and is multiplied by `shrink` until the
//! deviation estimate drops below `tau`, but never below `t_lower`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, Correction};
use crate::linalg::{self, LuFactor, Matrix};
use crate::problem::{MatrixPolicy, Problem};

/// Default lower step bound, `2^-24`.
///
/// Near the singular points of `M` the flow speed blows up and tracking it
/// within `tau` needs very small steps; a coarse floor such as `1/64` forces
/// long jumps there that land in the wrong basin.
pub const DEFAULT_T_LOWER: f64 = 1.0 / 16_777_216.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControllerConfig {
    /// Path-tracking tolerance; `f64::INFINITY` disables control (full steps).
    pub tau: f64,
    pub t_lower: f64,
    pub growth: f64,
    pub shrink: f64,
}

impl Default for StepControllerConfig {
    fn default() -> Self {
        Self { tau: 0.01, t_lower: DEFAULT_T_LOWER, growth: 2.0, shrink: 0.5 }
    }
}

impl StepControllerConfig {
    pub fn uncontrolled() -> Self {
        Self { tau: f64::INFINITY, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t_lower > 0.0 && self.t_lower < 1.0) {
            return Err(Error::InvalidArgument(format!("t_lower must lie in (0, 1), got {}", self.t_lower)));
        }
        if !(self.growth > 1.0) || !self.growth.is_finite() {
            return Err(Error::InvalidArgument(format!("growth must exceed 1, got {}", self.growth)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        Ok(())
    }
}

/// Evaluation of `F` at an accepted trial point, kept so the caller does not
/// have to recompute the next correction.
#[derive(Debug, Clone)]
pub struct TrialPoint {
    pub point: Vec<f64>,
    /// `J_f` at the trial point when the policy needed it.
    pub jacobian: Option<Matrix>,
    pub handle: LuFactor,
    pub correction: Correction,
}

#[derive(Debug, Clone)]
pub struct StepDecision {
    pub t: f64,
    pub deviation_estimate: f64,
    pub corrector_rounds: usize,
    /// `false` when `t_lower` was forced although the deviation exceeded `tau`.
    pub accepted: bool,
    /// Number of trial factorizations performed.
    pub factorizations: usize,
    /// Present when the controller evaluated `F` at `x + t delta` successfully.
    pub trial: Option<TrialPoint>,
}

/// Euler/Heun deviation `(t / 2) ||F(x + t delta) - F(x)||`: the distance
/// between the explicit Euler step and the trapezoidal step over `[0, t]`.
pub fn deviation(t: f64, delta: &[f64], trial_delta: &[f64]) -> f64 {
    0.5 * t * linalg::dist2(trial_delta, delta)
}

fn evaluate_trial<P: Problem + ?Sized>(
    problem: &P,
    policy: &MatrixPolicy,
    point: Vec<f64>,
    factorizations: &mut usize,
) -> Result<TrialPoint> {
    problem.domain().check(&point)?;
    let (jacobian, handle) = match policy {
        MatrixPolicy::CurrentJacobian => {
            let j = problem.eval_jacobian(&point)?;
            *factorizations += 1;
            let handle = LuFactor::new(&j)?;
            (Some(j), handle)
        }
        other => {
            let m = other.matrix_at(problem, &point)?;
            *factorizations += 1;
            (None, LuFactor::new(&m)?)
        }
    };
    let correction = kernel::correction(problem, &point, &handle)?;
    Ok(TrialPoint { point, jacobian, handle, correction })
}

/// Chooses the step size for the damped update `x + t * corr.delta`.
///
/// With `strict`, a deviation above `tau` at `t_lower` is an
/// [`Error::StepCollapse`]; otherwise `t_lower` is returned with
/// `accepted = false`. Singular or non-finite trial evaluations count as a
/// failed deviation test.
pub fn propose_step<P: Problem + ?Sized>(
    problem: &P,
    policy: &MatrixPolicy,
    x: &[f64],
    corr: &Correction,
    prev_t: f64,
    cfg: &StepControllerConfig,
    strict: bool,
) -> Result<StepDecision> {
    if cfg.tau == f64::INFINITY {
        return Ok(StepDecision {
            t: 1.0,
            deviation_estimate: 0.0,
            corrector_rounds: 0,
            accepted: true,
            factorizations: 0,
            trial: None,
        });
    }
    if !(prev_t > 0.0 && prev_t <= 1.0) {
        return Err(Error::InvalidArgument(format!("previous step must lie in (0, 1], got {prev_t}")));
    }

    let mut t = (cfg.growth * prev_t).min(1.0).max(cfg.t_lower);
    let mut rounds = 0;
    let mut factorizations = 0;
    loop {
        let point = linalg::axpy(x, t, &corr.delta);
        let (dev, trial) = match evaluate_trial(problem, policy, point, &mut factorizations) {
            Ok(trial) => (deviation(t, &corr.delta, &trial.correction.delta), Some(trial)),
            Err(_) => (f64::INFINITY, None),
        };
        if dev <= cfg.tau {
            return Ok(StepDecision {
                t,
                deviation_estimate: dev,
                corrector_rounds: rounds,
                accepted: true,
                factorizations,
                trial,
            });
        }
        if t <= cfg.t_lower {
            if strict {
                return Err(Error::StepCollapse { t_lower: cfg.t_lower, deviation: dev });
            }
            return Ok(StepDecision {
                t,
                deviation_estimate: dev,
                corrector_rounds: rounds,
                accepted: false,
                factorizations,
                trial,
            });
        }
        t = (t * cfg.shrink).max(cfg.t_lower);
        rounds += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{FnProblem, RootsOfUnity};

    fn newton_correction<P: Problem>(p: &P, x: &[f64]) -> Correction {
        let lu = LuFactor::new(&p.eval_jacobian(x).unwrap()).unwrap();
        kernel::correction(p, x, &lu).unwrap()
    }

    #[test]
    fn infinite_tau_gives_full_step() {
        let p = RootsOfUnity::new(6);
        let x = [0.1, 0.1];
        let c = newton_correction(&p, &x);
        for prev in [1.0, 0.3, 1.0 / 64.0] {
            let d = propose_step(&p, &MatrixPolicy::CurrentJacobian, &x, &c, prev, &StepControllerConfig::uncontrolled(), true)
                .unwrap();
            assert_eq!(d.t, 1.0);
            assert_eq!(d.corrector_rounds, 0);
            assert!(d.trial.is_none());
        }
    }

    #[test]
    fn near_singular_point_is_damped() {
        let p = RootsOfUnity::new(6);
        let x = [0.1, 0.1];
        let c = newton_correction(&p, &x);
        let cfg = StepControllerConfig::default();
        let d = propose_step(&p, &MatrixPolicy::CurrentJacobian, &x, &c, 1.0, &cfg, false).unwrap();
        assert!(d.t < 1.0);
        assert!(d.accepted);
        assert!(d.deviation_estimate <= 0.01);

        // independent re-check of the bound at the returned t
        let y = linalg::axpy(&x, d.t, &c.delta);
        let cy = newton_correction(&p, &y);
        let dev: f64 = 0.5
            * d.t
            * c.delta.iter().zip(&cy.delta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dev <= 0.01);
        assert_eq!(d.deviation_estimate, dev);
    }

    #[test]
    fn returned_step_within_bounds_and_deterministic() {
        let p = RootsOfUnity::new(6);
        let cfg = StepControllerConfig::default();
        for &(x0, x1) in &[(2.0, 0.0), (0.05, -0.02), (-1.7, 2.4), (0.3, 0.29)] {
            let x = [x0, x1];
            let c = newton_correction(&p, &x);
            let a = propose_step(&p, &MatrixPolicy::CurrentJacobian, &x, &c, 0.5, &cfg, false).unwrap();
            let b = propose_step(&p, &MatrixPolicy::CurrentJacobian, &x, &c, 0.5, &cfg, false).unwrap();
            assert!(a.t >= cfg.t_lower && a.t <= 1.0);
            assert_eq!(a.t, b.t);
            assert_eq!(a.deviation_estimate, b.deviation_estimate);
            assert_eq!(a.corrector_rounds, b.corrector_rounds);
        }
    }

    #[test]
    fn strict_mode_reports_collapse() {
        // a correction that lands exactly on the singular origin at every trial t
        let p = RootsOfUnity::new(6);
        let x = [1e-3, 0.0];
        let c = Correction::from_delta(vec![-1e-3, 0.0]);
        let cfg = StepControllerConfig { tau: 1e-300, ..Default::default() };
        let r = propose_step(&p, &MatrixPolicy::CurrentJacobian, &x, &c, 1.0, &cfg, true);
        assert!(matches!(r, Err(Error::StepCollapse { .. })));
        let d = propose_step(&p, &MatrixPolicy::CurrentJacobian, &x, &c, 1.0, &cfg, false).unwrap();
        assert_eq!(d.t, cfg.t_lower);
        assert!(!d.accepted);
    }

    #[test]
    fn predictor_grows_previous_step() {
        // f(x) = x: F(x) = -x, so the deviation is t^2 alpha / 2
        let p = FnProblem::new(1, |x: &[f64]| vec![x[0]], |_: &[f64]| Matrix::identity(1));
        let c = newton_correction(&p, &[1e-3]);
        let d = propose_step(&p, &MatrixPolicy::CurrentJacobian, &[1e-3], &c, 0.25, &StepControllerConfig::default(), true)
            .unwrap();
        assert_eq!(d.t, 0.5);
        assert_eq!(d.corrector_rounds, 0);
    }

    #[test]
    fn config_validation() {
        assert!(StepControllerConfig::default().validate().is_ok());
        assert!(StepControllerConfig::uncontrolled().validate().is_ok());
        assert!(StepControllerConfig { t_lower: 1.0, ..Default::default() }.validate().is_err());
        assert!(StepControllerConfig { growth: 1.0, ..Default::default() }.validate().is_err());
        assert!(StepControllerConfig { shrink: 1.0, ..Default::default() }.validate().is_err());
        assert!(StepControllerConfig { tau: 0.0, ..Default::default() }.validate().is_err());
    }
}
