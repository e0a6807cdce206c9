use thiserror::Error;

/// Errors produced by the library.
///
/// Numeric payloads are stored as `f64` so the enum stays independent of the
/// scalar type a computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("measure has no particle with positive weight")]
    EmptyMeasure,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("transport solver failure: {0}")]
    SolverFailure(String),

    #[error("brute force transport limited to 8 particles, got {0}")]
    TooLarge(usize),

    #[error("brute force transport needs uniform weights of equal count")]
    NonUniform,

    #[error("plan is not certified optimal")]
    NotOptimal,

    #[error("time {t} is not below the horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("time {t} is not below the blowup time {blowup}")]
    BeyondBlowup { t: f64, blowup: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("momentum crossed zero near s = {time} and step halving was exhausted")]
    DualityDegenerate { time: f64 },

    #[error("Legendre supremum diverges on the grid at z = {z}")]
    NotSuperlinear { z: f64 },

    #[error("problem data has no closed form: {0}")]
    NotClosedForm(String),

    #[error("validation failed: {0}")]
    Validation(String),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyMeasure => "empty_measure",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::SolverFailure(_) => "solver_failure",
            Error::TooLarge(_) => "too_large",
            Error::NonUniform => "non_uniform",
            Error::NotOptimal => "not_optimal",
            Error::HorizonExceeded { .. } => "horizon_exceeded",
            Error::BeyondBlowup { .. } => "beyond_blowup",
            Error::NoConvergence { .. } => "no_convergence",
            Error::DualityDegenerate { .. } => "duality_degenerate",
            Error::NotSuperlinear { .. } => "not_superlinear",
            Error::NotClosedForm(_) => "not_closed_form",
            Error::Validation(_) => "validation",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
