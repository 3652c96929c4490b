use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("invalid radar scan: {0}")]
    InvalidScan(String),

    #[error("invalid gyro series: {0}")]
    InvalidGyro(String),

    #[error("gyro data does not cover [{start}, {end}] s")]
    GyroCoverage { start: f64, end: f64 },

    #[error("scan does not use a triangular (alternating) chirp pattern")]
    NotTriangular,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid GP stencil: {0}")]
    Stencil(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
