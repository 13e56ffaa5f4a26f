//! Crate-wide error type.

use thiserror::Error;

use crate::lattice::MAX_VARS;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two values defined on different variable counts were combined.
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },

    /// A precondition on an argument was violated.
    #[error("{0}")]
    InvalidArgument(String),

    /// A dense vector does not have length 2^n for a supported n.
    #[error("dense vector length {len} is not 2^n for 1 <= n <= {MAX_VARS}")]
    InvalidLength { len: usize },

    /// Probabilities do not sum to 1 within tolerance.
    #[error("probabilities sum to {sum} which is outside {tol} of 1")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("negative probability {value} at outcome index {index}")]
    NegativeProbability { index: usize, value: f64 },

    /// Log-space coordinates need strictly positive probabilities.
    #[error("zero probability at outcome index {index}: log undefined")]
    ZeroProbability { index: usize },

    #[error("numeric range: {0}")]
    NumericRange(String),

    /// Moebius inversion of the given eta vector produced a clearly negative mass.
    #[error("inconsistent eta coordinates: implied p at outcome index {index} is {value}")]
    InconsistentEta { index: usize, value: f64 },

    /// KL(p, q) is undefined because q vanishes on the support of p.
    #[error("KL divergence undefined: q = 0 at outcome index {index} where p = {p}")]
    DivergenceUndefined { index: usize, p: f64 },

    /// Gradient ascent blew up instead of converging. Carries the per-iteration
    /// gradient norms observed up to the point of failure.
    #[error(
        "fit diverged after {iterations} iterations: gradient norm {grad_norm:.3e} \
         grew more than 100x from initial {initial_grad_norm:.3e}"
    )]
    FitDiverged {
        iterations: usize,
        grad_norm: f64,
        initial_grad_norm: f64,
        grad_trace: Vec<f64>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
