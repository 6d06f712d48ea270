use thiserror::Error;

/// Errors raised by parameter validation, likelihood evaluation, fitting and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{field}` = {value} violates {bound}")]
    Domain {
        field: &'static str,
        value: f64,
        bound: &'static str,
    },
    #[error("missing parameter `{0}`")]
    MissingField(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownField(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("dataset parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("quadrature tolerance not met: estimate {estimate:e}, error bound {error:e}")]
    ToleranceNotMet { estimate: f64, error: f64 },
    #[error("no finite maximum likelihood estimate: {0}")]
    NoFiniteMle(&'static str),
    #[error("at least two distinct sacrifice times are required, found {0}")]
    InsufficientTimes(usize),
    #[error("profile log-likelihood decreased from {previous} to {current}")]
    NonMonotoneProfile { previous: f64, current: f64 },
    #[error("observed information matrix is singular or not positive definite")]
    SingularInformation,
    #[error("comparison table requires the LRM baseline fit")]
    MissingBaseline,
    #[error("random-effect slope rejection budget exceeded after {0} draws")]
    RejectionBudgetExceeded(usize),
    #[error("size mismatch: expected {expected} trajectories, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("trajectory grid mismatch: {0}")]
    GridMismatch(String),
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("log-likelihood is not finite at the starting point")]
    InfeasibleStart,
}

pub type Result<T> = std::result::Result<T, Error>;
