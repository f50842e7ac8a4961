//! Error taxonomy shared across the crate.

use crate::rm::RmTrace;

/// Crate-wide error type.
///
/// Variants separate structural misuse (bad indices, malformed configs) from
/// statistical failure modes (domain violations of a generator, singular
/// systems, underidentified fits) so callers can react differently.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Index sets, partitions, or shapes do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// Parameter values outside the generator's domain (negative variances,
    /// non-PSD covariances, infeasible structural constraints).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violate a precondition (non-binary entries, non-PD sample
    /// covariance, wrong column count).
    #[error("data error: {0}")]
    Data(String),

    /// Too few indicators for the requested measurement model.
    #[error("underidentified: {0}")]
    Underidentified(String),

    /// A response category is missing for an item; the fit cannot proceed.
    #[error("boundary error: {0}")]
    Boundary(String),

    /// Numerical failure with diagnostics (singular system, failed root
    /// bracket, negative variance estimate).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The estimated Jacobian block is too ill-conditioned for inference.
    #[error("inference error: {0}")]
    Inference(String),

    /// Stochastic-approximation run aborted; the partial trace is attached
    /// for diagnostics.
    #[error("stochastic approximation aborted at iteration {iteration}: {source}")]
    RmAborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
        trace: Box<RmTrace>,
    },

    /// Malformed configuration or command-line usage.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
