use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty collocation set")]
    EmptyCollocation,
    #[error("gap undefined at sharp edge: |n_y| = {0:e}")]
    SharpEdge(f64),
    #[error("zero reference norm")]
    ZeroReference,
    #[error("point outside domain: {0}")]
    OutOfDomain(String),
    #[error("point file: {0}")]
    PointFile(String),
    #[error("data file: {0}")]
    DataFile(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
