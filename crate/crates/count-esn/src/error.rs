use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed or invalid input data.
    #[error("data error: {0}")]
    Data(String),
    /// Incompatible dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A numerical routine failed (divergence, singular matrix, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
