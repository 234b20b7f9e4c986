use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: String,
        expected: String,
        got: String,
    },

    #[error(
        "Jacobi SVD did not converge after {sweeps} sweeps \
         (off-diagonal ratio {off_diagonal:.3e}, condition estimate {condition:.3e})"
    )]
    NoConvergence {
        sweeps: usize,
        off_diagonal: f64,
        condition: f64,
    },

    #[error("non-finite gradient in parameter '{name}'")]
    NonFiniteGradient { name: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("dataset file not found: {0}")]
    MissingData(PathBuf),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            op: op.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
