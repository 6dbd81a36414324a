use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto its exit-code contract:
/// resource caps exit with 2, everything else here is an input or numeric
/// error exiting with 1 (certification failures are reported outcomes, not
/// errors).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("iteration failed to converge: {0}")]
    Convergence(String),

    #[error("signal covers [0, {covered}] but propagation requires [0, {needed}]")]
    SignalTooShort { covered: f64, needed: f64 },

    #[error("candidate set grew past the configured cap of {cap} matrices")]
    SetCapExceeded { cap: usize },

    #[error("enumeration of {count} mode sequences exceeds the cap of {cap}")]
    EnumerationCapExceeded { count: u128, cap: u128 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
