//! Failure taxonomy shared by every solver path.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular deformation: det F = {det:e}")]
    SingularDeformation { det: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("determinant floor violated at {point:?}: det = {value:e} < {floor:e}")]
    DeterminantFloorViolated {
        point: Vec<f64>,
        value: f64,
        floor: f64,
    },

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("line search stalled at step {step:e}")]
    LineSearchStalled { step: f64 },

    #[error("no convergence within {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("Newton diverged after {iterations} iterations (residual {residual:e}); reduce dt")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),

    #[error("non-finite evaluation: {0}")]
    NonFiniteEvaluation(String),

    #[error("resolution insufficient: {elements_per_wavelength:.2} elements per wavelength (need 10)")]
    ResolutionInsufficient { elements_per_wavelength: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("cross-check failed: {0}")]
    CheckFailed(String),

    #[error("step {step} (t = {time}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        source: Box<Error>,
    },
}

impl Error {
    /// Machine-readable failure class, stable across releases.
    pub fn class(&self) -> &'static str {
        match self {
            Error::SingularDeformation { .. } => "SingularDeformation",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::DeterminantFloorViolated { .. } => "DeterminantFloorViolated",
            Error::InfeasibleStart(_) => "InfeasibleStart",
            Error::LineSearchStalled { .. } => "LineSearchStalled",
            Error::MaxIterations { .. } => "MaxIterations",
            Error::NewtonDiverged { .. } => "NewtonDiverged",
            Error::LinearSolveFailed(_) => "LinearSolveFailed",
            Error::NonFiniteEvaluation(_) => "NonFiniteEvaluation",
            Error::ResolutionInsufficient { .. } => "ResolutionInsufficient",
            Error::Parse(_) => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::Io(_) => "IoError",
            Error::CheckFailed(_) => "CheckFailed",
            Error::AtStep { source, .. } => source.class(),
        }
    }

    /// The error without step/time context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 2 config, 3 solver, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::InvalidConfig(_) | Error::Parse(_) | Error::Validation(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
