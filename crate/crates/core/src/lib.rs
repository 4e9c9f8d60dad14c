//! Globalized Newton-type root finding with a certified switch to the
//! simplified (frozen-matrix) Newton iteration.
//!
//! The damped phase follows the continuous Newton flow with adaptive step
//! sizes. As soon as the computable certificate
//! `alpha * omega_hat <= (1 - kappa)^2 / 2` holds, the iteration freezes
//! the matrix and finishes with plain fixed-point sweeps that need no
//! further Jacobians or factorizations.
//!
//! ```
//! use newton_switch::{builtin, solve, Mode, SolverConfig};
//!
//! let problem = builtin("z6m1").unwrap();
//! let trace = solve(&problem, &[2.0, 0.0], &SolverConfig::for_mode(Mode::AS)).unwrap();
//! assert!(trace.converged());
//! assert!(trace.switched_at.is_some());
//! ```

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basin;
pub mod certificate;
pub mod cli;
pub mod driver;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod output;
pub mod problem;
pub mod step;

pub use basin::{basin_scan, correct_zero_of, direction_field, table1, BasinReport, GridSpec, Table1};
pub use certificate::{
    estimate_kappa, estimate_omega_hat, radii, verdict, verify_certificate_sampled, SwitchCertificate,
};
pub use driver::{solve, IterationMatrix, Mode, Outcome, SolveTrace, SolverConfig};
pub use error::{Error, Result};
pub use kernel::{correction, simplified_iterate, Correction, SimplifiedRunResult};
pub use linalg::{LuFactor, Matrix};
pub use problem::{builtin, finite_difference_jacobian, MatrixPolicy, Problem};
pub use step::{propose_step, StepControllerConfig, StepDecision};
