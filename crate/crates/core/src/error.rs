use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("shifted matrix is not positive definite (shift {shift:e})")]
    NotPositiveDefinite { shift: f64 },

    #[error("symmetric eigensolver failed on an order-{order} matrix (residual {residual:e})")]
    EigenFailure { order: usize, residual: f64 },

    #[error("zero step passed to the SR1 update")]
    InvalidStep,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("problem does not expose a Hessian")]
    HessianUnavailable,

    #[error("cubic subproblem did not reach tolerance after {iterations} iterations (sigma in [{lo:e}, {hi:e}], residual {residual:e})")]
    SubproblemNotConverged {
        iterations: usize,
        lo: f64,
        hi: f64,
        residual: f64,
    },

    #[error("prox fixed-point bracket failure: {0}")]
    BracketFailure(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("image format error: {0}")]
    Image(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("constants undefined: {0}")]
    ConstantsUndefined(String),
}
