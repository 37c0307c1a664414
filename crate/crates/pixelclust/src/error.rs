use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: malformed PGM: {reason}", path.display())]
    PgmFormat { path: PathBuf, reason: String },

    #[error("{}: {reason}", path.display())]
    DatasetLayout { path: PathBuf, reason: String },

    #[error(
        "{}: image is {found_w}x{found_h} but the dataset is {expected_w}x{expected_h} \
         (load with a resize target to mix sizes)",
        path.display()
    )]
    MixedDimensions {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cannot form {requested} clusters: only {distinct} distinct vectors among {total}")]
    ClusterCount {
        requested: usize,
        distinct: usize,
        total: usize,
    },

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("{}: bad model file: {reason}", path.display())]
    ModelFormat { path: PathBuf, reason: String },

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
