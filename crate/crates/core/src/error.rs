//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// On-disk data that does not conform to its format.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// A constructor or operation argument violating an invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two rasters with different BEV geometry were combined.
    #[error("grid mismatch: operands use different BEV grid geometry")]
    GridMismatch,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// Prediction/ground-truth scan id sets do not align.
    #[error("scan id mismatch: missing in predictions {missing_in_preds:?}, missing in ground truth {missing_in_gts:?}")]
    ScanIdMismatch {
        missing_in_preds: Vec<String>,
        missing_in_gts: Vec<String>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
