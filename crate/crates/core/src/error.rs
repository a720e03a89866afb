use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("program is not guard-normalized: {0}")]
    NotNormalized(String),
    #[error("ill-formed program: {0}")]
    IllFormed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
