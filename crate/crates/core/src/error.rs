use std::path::PathBuf;

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::geometry::GeometryError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Archive(#[from] ArchiveError),

    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("zero-norm feature vector")]
    ZeroVector,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample {sample_id}: {reason}")]
    Sample { sample_id: String, reason: String },

    #[error("sample {sample_id} has no tensor `{layer}`")]
    MissingTensor { sample_id: String, layer: String },

    #[error("design matrix is rank deficient ({rank} < {needed}); use a positive ridge penalty")]
    RankDeficient { rank: usize, needed: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("condition `{condition}` has {available} training trials, need at least {needed}")]
    InsufficientCondition {
        condition: String,
        available: usize,
        needed: usize,
    },

    #[error("answers: {0}")]
    Answers(String),

    #[error("attention rows must sum to 1 (row {row} of head {head} sums to {sum})")]
    NotNormalized { head: usize, row: usize, sum: f64 },

    #[error("model sets differ between score maps")]
    ModelSetMismatch,

    #[error("conflicting duplicate report cell {0}")]
    ConflictingCell(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn sample(sample_id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Sample {
            sample_id: sample_id.into(),
            reason: reason.into(),
        }
    }
}
