use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image {id}: {reason}")]
    InvalidImage { id: String, reason: String },

    #[error("image {id} is {width}x{height}, need at least 8x8")]
    ImageTooSmall { id: String, width: u32, height: u32 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("unknown vertex {0}")]
    UnknownVertex(String),

    #[error("no features for vertex {0}")]
    MissingFeatures(String),

    #[error("no latent distribution for code {0}")]
    MissingCode(String),

    #[error("vertex {0} co-occurred with no code")]
    NoCooccurringCode(String),

    #[error("invalid latent distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("graph too large for dense solve: {n} vertices (limit {limit})")]
    GraphTooLarge { n: usize, limit: usize },

    #[error("coverage undefined: {0}")]
    Coverage(String),

    #[error("unknown propagation schedule `{0}`")]
    UnknownSchedule(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// Attach a file path to a line-level parse error.
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, reason } => Error::File {
                path: path.into(),
                message: format!("line {line}: {reason}"),
            },
            other => other,
        }
    }
}
