use thiserror::Error;

/// Failures raised by the numerical kernels.
///
/// The driver never lets these escape `solve`; they are folded into the
/// trace outcome there.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("iteration matrix is singular to working precision")]
    SingularSystem,

    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),

    #[error("point {point:?} lies outside the problem domain")]
    DomainViolation { point: Vec<f64> },

    #[error("consecutive iterates coincide (step norm {step_norm:e})")]
    DegenerateStep { step_norm: f64 },

    #[error("simplified iterate left the guard ball after {sweeps} sweeps (distance {distance:e} > radius {radius:e})")]
    GuardViolation {
        sweeps: usize,
        distance: f64,
        radius: f64,
        /// The offending iterate, used to resume the adaptive phase.
        point: Vec<f64>,
    },

    #[error("step size collapsed to the lower bound {t_lower} with deviation {deviation:e}")]
    StepCollapse { t_lower: f64, deviation: f64 },

    #[error("estimate of ||Id - M^-1 J|| is {estimate} >= 1")]
    EstimateOverflow { estimate: f64 },

    #[error("{0} has no angular sector (origin)")]
    NoSector(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown problem identifier `{0}`")]
    UnknownProblem(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
