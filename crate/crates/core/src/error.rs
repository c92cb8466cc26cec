//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by the precoding pipeline and the experiment runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The LQ factorization produced a diagonal entry with magnitude below 1e-12.
    #[error("rank-deficient matrix: |l[{index},{index}]| = {magnitude:e}")]
    RankDeficient { index: usize, magnitude: f64 },

    /// Power iteration did not meet its tolerance within the iteration cap.
    /// The best iterate is carried so callers can fall back to it.
    #[error("power iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        best_iterate: Vec<num_complex::Complex64>,
    },

    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// The common stream consumes the whole power budget.
    #[error("no private power left: Etr = {etr}, |p_c|^2 = {pc_norm2}")]
    NoPrivatePower { etr: f64, pc_norm2: f64 },

    /// Power scaling factor requested before `compute_beta` filled it.
    #[error("filter set has no power scaling factor")]
    BetaUnset,

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid configuration for `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },

    #[error("i/o failure: {0}")]
    IoFailure(String),
}

impl Error {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
