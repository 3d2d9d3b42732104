use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Hard failures. Metric values that merely cannot be evaluated on the given
/// data are carried as [`crate::MetricValue::Undefined`] instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes: expected BIAUD1\\0\\0, found {found:02x?}")]
    BadMagic { found: Vec<u8> },

    #[error("truncated {section}: expected {expected} bytes, found {found}")]
    Truncated {
        section: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{extra} unexpected trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("invalid embedding header: {0}")]
    Header(String),

    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f32 },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("unknown protected attribute `{0}`")]
    UnknownAttribute(String),

    #[error("label `{label}` is not a demographic of attribute `{attribute}`")]
    UnknownLabel { attribute: String, label: String },

    #[error("invalid protected attribute: {0}")]
    InvalidAttribute(String),

    #[error("sample id `{0}` not found")]
    MissingId(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-magnitude vector for `{0}`")]
    ZeroVector(String),

    #[error("demographic `{0}` has no samples in the corpus")]
    AbsentDemographic(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty answer vocabulary after filtering")]
    EmptyVocabulary,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
