use thiserror::Error;

/// Errors raised by the coarse-geometry engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation (negative radius, ε ≤ 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested value lies outside the image of a bounded function.
    #[error("range error: {0}")]
    Range(String),

    /// Breakpoint data does not describe a valid monotone piecewise-linear function.
    #[error("invalid function: {0}")]
    InvalidFunction(String),

    /// A hypothesis required by a construction does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Malformed metric space data, or a point outside the point domain.
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
