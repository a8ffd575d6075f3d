use std::path::PathBuf;

use thiserror::Error;

use crate::batch::ClassId;

pub type Result<T, E = KldaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KldaError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected width {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("class {0} has already been observed; classes must be disjoint across tasks")]
    DuplicateClass(ClassId),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("accumulator is empty: no class has been observed")]
    EmptyAccumulator,

    #[error(
        "shared covariance plus ridge is not positive definite (pivot {pivot} = {value:e}); \
         increase the ridge"
    )]
    Singular { pivot: usize, value: f64 },

    #[error("cosine similarity undefined for zero-norm test vector at row {0}")]
    UndefinedSimilarity(usize),

    #[error("model corruption: {0}")]
    ModelCorruption(String),

    #[error("cannot aggregate reports: {0}")]
    Aggregation(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("truncated or oversized stream: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("negative label {label} at row {row}")]
    NegativeLabel { row: usize, label: i64 },

    #[error("corrupt state: {0}")]
    CorruptState(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest parse error: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl KldaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KldaError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while decoding a binary stream
    /// (magic, version, size, checksum or payload validation).
    pub fn is_decode_error(&self) -> bool {
        matches!(
            self,
            KldaError::Magic { .. }
                | KldaError::Version(_)
                | KldaError::Truncated { .. }
                | KldaError::Checksum { .. }
                | KldaError::NonFinite { .. }
                | KldaError::NegativeLabel { .. }
                | KldaError::CorruptState(_)
                | KldaError::Input(_)
        )
    }
}
