//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by grid construction, channel generation, factorization
/// and equalization.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid parameters violate an invariant (zero dimension, nonpositive spacing).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An operand does not match the grid or vector length it was paired with.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Delay profile violates an invariant (ordering, collisions, D_P >= M).
    #[error("invalid delay profile: {0}")]
    Profile(String),

    /// A dense materialization was requested above the configured guard.
    #[error("dense size guard: requested {size}x{size} exceeds limit {limit}x{limit}")]
    SizeGuard { size: usize, limit: usize },

    /// Pivot magnitude fell below the singularity threshold during elimination.
    /// `step` is the 1-based elimination step.
    #[error("singular pivot at elimination step {step} (|pivot| = {magnitude:.3e})")]
    SingularPivot { step: usize, magnitude: f64 },

    /// One transformed block of a block-circulant operator is singular.
    /// `t` is the 1-based block index.
    #[error("singular transformed block t = {t}: {source}")]
    SingularBlock {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    /// Dense inversion failed; carries a crude condition estimate.
    #[error("numerically singular matrix (condition estimate >= {cond_estimate:.3e})")]
    NumericallySingular { cond_estimate: f64 },

    /// Simulation or CLI configuration rejected.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Channel record import failed.
    #[error("channel record parse error at line {line}: {msg}")]
    ChannelParse { line: usize, msg: String },

    /// Underlying I/O failure while reading or writing external records.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
