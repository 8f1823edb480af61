//! Error type shared across the crate.

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for model construction, numerics, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// An exact (enumeration-based) operation was asked for a state space
    /// beyond its limit.
    #[error("state space too large for {context}: D={d} exceeds limit {limit}")]
    TooLarge {
        context: &'static str,
        d: usize,
        limit: usize,
    },

    /// Block Gibbs and the negative-phase samplers require a bipartite
    /// coupling mask.
    #[error("{context} requires a bipartite coupling mask")]
    NotBipartite { context: &'static str },

    /// W + beta*I failed its Cholesky factorization; `required_min` is a
    /// power-iteration estimate of |lambda_min(W)|, the smallest admissible
    /// beta.
    #[error(
        "W + {beta}*I is not positive definite; beta must exceed approximately {required_min:.6}"
    )]
    NotPositiveDefinite { beta: f64, required_min: f64 },

    /// A smoothing family was constructed with invalid parameters
    /// (beta <= 0, beta <= 1 for the power family, epsilon outside (0,1)).
    #[error("invalid smoothing parameter: {0}")]
    InvalidSmoothing(String),

    /// A point lies outside the support of the smoothing family.
    #[error("value outside smoothing support: {0}")]
    OutsideSupport(String),

    /// Catch-all for invalid arguments (empty batches, K < 1, bad shapes of
    /// synthetic-data specs, incompatible configs, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Discrete evaluation needs a log-partition estimate (run AIS first).
    #[error("missing log-partition estimate; run AIS before discrete evaluation")]
    MissingLogZ,

    /// A checkpoint or dataset file was malformed.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand used by the dimension checks sprinkled through the hot paths.
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimMismatch {
            context,
            expected,
            found,
        }
    }
}
