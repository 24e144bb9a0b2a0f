use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("connection matrix is not symmetric: T[{i}][{j}] = {a} but T[{j}][{i}] = {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("connection matrix has nonzero diagonal entry T[{0}][{0}] = {1}")]
    NonzeroDiagonal(usize, f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("spin entries must be -1 or +1, found {0} at index {1}")]
    InvalidSpin(f64, usize),

    #[error("inverse temperature must be positive and finite, got {0}")]
    InvalidBeta(f64),

    #[error("enumeration over {n} spins exceeds the limit of {limit}")]
    TooManySpins { n: usize, limit: usize },

    #[error("activation {value} is outside the open interval ({lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("matrix entry [{0}][{1}] = {2} must be strictly positive")]
    NonPositiveEntry(usize, usize, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hebbian update requested in recall mode (learning rate is zero)")]
    RecallModeUpdate,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite state at step {0}")]
    Diverged(usize),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
