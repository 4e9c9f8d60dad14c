//! Adaptive simplified-Newton-like driver.
//!
//! The damped phase takes steps `x <- x + t delta` with `t` from the step
//! controller. After every step the driver estimates the affine-covariant
//! Lipschitz constant from the last two iterates and, in the switching
//! modes, hands over to the frozen-matrix iteration as soon as
//! `alpha * omega_hat <= (1 - kappa)^2 / 2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certificate::{self, SwitchCertificate};
use crate::error::{Error, Result};
use crate::kernel::{self, Correction, DEFAULT_MAX_SWEEPS};
use crate::linalg::{self, LuFactor, Matrix};
use crate::problem::{Counted, MatrixPolicy, Problem};
use crate::step::{self, StepControllerConfig};

/// Iterates with a norm above this are declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// Outer iterations the switch stays disabled after the first guard violation.
pub const BASE_COOLDOWN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Adaptive steps, switch to simplified Newton.
    AS,
    /// Adaptive steps, no switch.
    ANS,
    /// Full steps, no switch (classical Newton).
    NANS,
    /// Full steps, switch to simplified Newton.
    NAS,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::AS, Mode::ANS, Mode::NANS, Mode::NAS];

    pub fn adaptive(self) -> bool {
        matches!(self, Mode::AS | Mode::ANS)
    }

    pub fn switches(self) -> bool {
        matches!(self, Mode::AS | Mode::NAS)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::AS => "AS",
            Mode::ANS => "ANS",
            Mode::NANS => "NANS",
            Mode::NAS => "NAS",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AS" => Ok(Mode::AS),
            "ANS" => Ok(Mode::ANS),
            "NANS" => Ok(Mode::NANS),
            "NAS" => Ok(Mode::NAS),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}` (expected AS, ANS, NANS or NAS)"))),
        }
    }
}

/// Matrix used for the damped corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationMatrix {
    Jacobian,
    Identity,
}

impl IterationMatrix {
    fn policy(self) -> MatrixPolicy {
        match self {
            IterationMatrix::Jacobian => MatrixPolicy::CurrentJacobian,
            IterationMatrix::Identity => MatrixPolicy::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: Mode,
    /// Tolerance on the correction norm `alpha`.
    pub eps: f64,
    pub max_outer: usize,
    pub step: StepControllerConfig,
    /// Tolerance for the simplified phase.
    pub simplified_eps: f64,
    pub max_sweeps: usize,
    pub matrix: IterationMatrix,
    /// Stop after the simplified phase whatever its result, as the bare
    /// algorithm does, instead of resuming the damped phase on a guard
    /// violation.
    pub strict_algorithm1: bool,
    /// Report `StepCollapse` when even `t_lower` fails the deviation test.
    pub strict_steps: bool,
    /// Multiplies the certified radius used as the simplified-phase guard.
    /// Values below one fabricate too-small balls (diagnostics only).
    pub guard_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_mode(Mode::AS)
    }
}

impl SolverConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            mode,
            eps: 1e-10,
            max_outer: 500,
            step: StepControllerConfig::default(),
            simplified_eps: 1e-10,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            matrix: IterationMatrix::Jacobian,
            strict_algorithm1: false,
            strict_steps: false,
            guard_scale: 1.0,
        }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    /// Step configuration actually used: the non-adaptive modes force
    /// `tau = inf`.
    pub fn effective_step(&self) -> StepControllerConfig {
        if self.mode.adaptive() {
            self.step
        } else {
            StepControllerConfig { tau: f64::INFINITY, ..self.step }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.simplified_eps > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.guard_scale > 0.0) {
            return Err(Error::InvalidArgument("guard scale must be positive".into()));
        }
        self.effective_step().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Converged,
    MaxIterations,
    StepCollapse,
    SingularAbort,
    /// NaN/Inf values, an iterate beyond the divergence bound, or an
    /// iterate outside the domain.
    NonFinite,
    /// Guard violation in the simplified phase with `strict_algorithm1`.
    GuardViolation,
}

/// One guard violation and the continuation chosen for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardEvent {
    /// Outer iteration at which the failed switch happened.
    pub iteration: usize,
    pub sweeps: usize,
    pub resume_at: Vec<f64>,
    pub cooldown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub mode: Mode,
    pub outcome: Outcome,
    pub zero: Option<Vec<f64>>,
    pub outer_iterations: usize,
    pub simplified_sweeps: usize,
    /// Index into `certificates` of the certificate that triggered the
    /// last switch. Certificate `k` belongs to outer iteration `k`.
    pub switched_at: Option<usize>,
    pub certificates: Vec<SwitchCertificate>,
    /// Accepted step sizes, one per outer iteration.
    pub steps: Vec<f64>,
    pub guard_events: Vec<GuardEvent>,
    pub final_alpha: f64,
    pub f_evals: u64,
    #[serde(rename = "J_evals")]
    pub j_evals: u64,
    pub factorizations: u64,
    /// Jacobian evaluations performed after the last switch.
    #[serde(rename = "J_evals_after_switch")]
    pub j_evals_after_switch: Option<u64>,
    pub factorizations_after_switch: Option<u64>,
}

impl SolveTrace {
    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }
}

/// Continuation after a guard violation in the simplified phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    pub resume_at: Vec<f64>,
    /// Outer iterations during which verdicts are forced false.
    pub cooldown: usize,
}

/// Re-enters the damped phase after a guard violation: the iteration
/// resumes at the offending iterate and the switch is disabled for
/// `BASE_COOLDOWN * 2^(k-1)` outer iterations after the `k`-th violation.
#[derive(Debug, Clone, Default)]
pub struct ResumePolicy {
    violations: u32,
}

impl ResumePolicy {
    pub fn on_violation(&mut self, offending_point: Vec<f64>) -> Continuation {
        self.violations += 1;
        let cooldown = BASE_COOLDOWN << (self.violations - 1).min(20);
        Continuation { resume_at: offending_point, cooldown }
    }

    pub fn violations(&self) -> u32 {
        self.violations
    }
}

struct Point {
    x: Vec<f64>,
    jac: Option<Matrix>,
    handle: LuFactor,
    corr: Correction,
}

struct Run<'p, P: ?Sized> {
    problem: Counted<'p, P>,
    policy: MatrixPolicy,
    factorizations: u64,
}

impl<P: Problem + ?Sized> Run<'_, P> {
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.problem.eval_jacobian(x)
    }

    fn factorize(&mut self, m: &Matrix) -> Result<LuFactor> {
        self.factorizations += 1;
        LuFactor::new(m)
    }

    /// `M(x)`, its factorization and the correction at `x`, reusing a known
    /// Jacobian when there is one.
    fn point(&mut self, x: Vec<f64>, jac: Option<Matrix>, need_jac: bool) -> Result<Point> {
        let jac = match jac {
            Some(j) => Some(j),
            None if need_jac || self.policy == MatrixPolicy::CurrentJacobian => Some(self.jacobian(&x)?),
            None => None,
        };
        let m = match &jac {
            Some(j) => self.policy.matrix_from_jacobian(j),
            None => self.policy.matrix_at(&self.problem, &x)?,
        };
        let handle = self.factorize(&m)?;
        let corr = kernel::correction(&self.problem, &x, &handle)?;
        Ok(Point { x, jac, handle, corr })
    }
}

fn failure_outcome(e: &Error) -> Outcome {
    match e {
        Error::SingularSystem => Outcome::SingularAbort,
        Error::StepCollapse { .. } => Outcome::StepCollapse,
        _ => Outcome::NonFinite,
    }
}

fn diverged(x: &[f64]) -> bool {
    let n = linalg::norm2(x);
    !n.is_finite() || n > DIVERGENCE_BOUND
}

/// Runs the adaptive simplified-Newton-like method from `x0`.
///
/// Numerical failures end up in [`SolveTrace::outcome`]; only invalid input
/// (dimension mismatch, bad configuration) is an `Err`.
pub fn solve<P: Problem + ?Sized>(problem: &P, x0: &[f64], cfg: &SolverConfig) -> Result<SolveTrace> {
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    cfg.validate()?;

    let mut run = Run { problem: Counted::new(problem), policy: cfg.matrix.policy(), factorizations: 0 };
    let mut trace = SolveTrace {
        mode: cfg.mode,
        outcome: Outcome::MaxIterations,
        zero: None,
        outer_iterations: 0,
        simplified_sweeps: 0,
        switched_at: None,
        certificates: Vec::new(),
        steps: Vec::with_capacity(32),
        guard_events: Vec::new(),
        final_alpha: f64::NAN,
        f_evals: 0,
        j_evals: 0,
        factorizations: 0,
        j_evals_after_switch: None,
        factorizations_after_switch: None,
    };
    let mut snapshot: Option<(u64, u64)> = None;

    let outcome = iterate(&mut run, x0, cfg, &mut trace, &mut snapshot);
    trace.outcome = outcome;
    trace.f_evals = run.problem.f_evals();
    trace.j_evals = run.problem.j_evals();
    trace.factorizations = run.factorizations;
    if let Some((j, fac)) = snapshot {
        trace.j_evals_after_switch = Some(trace.j_evals - j);
        trace.factorizations_after_switch = Some(trace.factorizations - fac);
    }
    Ok(trace)
}

fn iterate<P: Problem + ?Sized>(
    run: &mut Run<'_, P>,
    x0: &[f64],
    cfg: &SolverConfig,
    trace: &mut SolveTrace,
    snapshot: &mut Option<(u64, u64)>,
) -> Outcome {
    if run.problem.domain().check(x0).is_err() || diverged(x0) {
        return Outcome::NonFinite;
    }
    let step_cfg = cfg.effective_step();
    let switching = cfg.mode.switches();

    // delta_0 <- -M(x_0)^-1 f(x_0); x_s <- x_0
    let mut current = match run.point(x0.to_vec(), None, switching) {
        Ok(p) => p,
        Err(e) => return failure_outcome(&e),
    };
    let mut prev_t = 1.0;
    let mut resume = ResumePolicy::default();
    let mut cooldown = 0usize;

    loop {
        trace.final_alpha = current.corr.alpha;
        if current.corr.alpha <= cfg.eps {
            trace.zero = Some(current.x.clone());
            return Outcome::Converged;
        }
        if trace.outer_iterations >= cfg.max_outer {
            return Outcome::MaxIterations;
        }

        // corrector: accept a step size for the current direction
        let decision = match step::propose_step(
            &run.problem,
            &run.policy,
            &current.x,
            &current.corr,
            prev_t,
            &step_cfg,
            cfg.strict_steps,
        ) {
            Ok(d) => d,
            Err(e) => return failure_outcome(&e),
        };
        run.factorizations += decision.factorizations as u64;
        let iteration = trace.outer_iterations;
        trace.outer_iterations += 1;
        trace.steps.push(decision.t);

        let x_new = linalg::axpy(&current.x, decision.t, &current.corr.delta);
        if diverged(&x_new) || run.problem.domain().check(&x_new).is_err() {
            return Outcome::NonFinite;
        }

        let reuse = decision.trial.filter(|tr| tr.point == x_new);
        let jac_new = match reuse.as_ref().and_then(|tr| tr.jacobian.clone()) {
            Some(j) => Some(j),
            None if switching || run.policy == MatrixPolicy::CurrentJacobian => match run.jacobian(&x_new) {
                Ok(j) => Some(j),
                Err(e) => return failure_outcome(&e),
            },
            None => None,
        };

        if switching {
            let jac_s = current.jac.as_ref().expect("switching modes keep the Jacobian");
            let jac_n = jac_new.as_ref().expect("switching modes keep the Jacobian");
            let omega_hat = certificate::estimate_omega_hat(&current.handle, jac_n, jac_s, &x_new, &current.x)
                .unwrap_or(f64::INFINITY);
            let kappa = match certificate::estimate_kappa(&run.policy, &current.handle, jac_s) {
                Ok(k) => k,
                Err(Error::EstimateOverflow { estimate }) => estimate,
                Err(_) => f64::INFINITY,
            };
            let mut cert = SwitchCertificate::new(current.corr.alpha, omega_hat, kappa);
            if cooldown > 0 {
                cert.verdict = false;
            }
            let verdict = cert.verdict;
            let guard = cert.radius_big.unwrap_or(f64::INFINITY) * cfg.guard_scale;
            trace.certificates.push(cert);

            if verdict {
                // freeze M at the current iterate; an accepted trial already factorized it
                let fresh;
                let frozen = match reuse.as_ref() {
                    Some(tr) => Some(&tr.handle),
                    None => {
                        let m = run.policy.matrix_from_jacobian(jac_n);
                        fresh = run.factorize(&m).ok();
                        fresh.as_ref()
                    }
                }
                .filter(|h| !h.is_singular());
                if let Some(frozen) = frozen {
                    trace.switched_at = Some(iteration);
                    *snapshot = Some((run.problem.j_evals(), run.factorizations));
                    match kernel::simplified_iterate(
                        &run.problem,
                        &x_new,
                        frozen,
                        cfg.simplified_eps,
                        cfg.max_sweeps,
                        guard,
                    ) {
                        Ok(res) => {
                            trace.simplified_sweeps += res.iterations;
                            trace.final_alpha = res.residual_history.last().copied().unwrap_or(0.0);
                            if res.converged {
                                trace.zero = Some(res.point);
                                return Outcome::Converged;
                            }
                            return Outcome::MaxIterations;
                        }
                        Err(Error::GuardViolation { sweeps, point, .. }) => {
                            trace.simplified_sweeps += sweeps;
                            if cfg.strict_algorithm1 {
                                return Outcome::GuardViolation;
                            }
                            let cont = resume.on_violation(point);
                            cooldown = cont.cooldown;
                            trace.guard_events.push(GuardEvent {
                                iteration,
                                sweeps,
                                resume_at: cont.resume_at.clone(),
                                cooldown,
                            });
                            if diverged(&cont.resume_at) {
                                return Outcome::NonFinite;
                            }
                            current = match run.point(cont.resume_at, None, true) {
                                Ok(p) => p,
                                Err(e) => return failure_outcome(&e),
                            };
                            continue;
                        }
                        Err(e) => return failure_outcome(&e),
                    }
                }
            }
        }
        cooldown = cooldown.saturating_sub(1);

        // update the direction at the new iterate; x_s <- x_0
        current = match reuse {
            Some(tr) => Point { x: x_new, jac: jac_new, handle: tr.handle, corr: tr.correction },
            None => match run.point(x_new, jac_new, switching) {
                Ok(p) => p,
                Err(e) => return failure_outcome(&e),
            },
        };
        // predictor: the next trial starts from min(1, growth * t)
        prev_t = decision.t;
    }
}
