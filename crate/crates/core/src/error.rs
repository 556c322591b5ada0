use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("insufficient data: need at least {required} time steps, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::train::Checkpoint>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("undefined MASE: seasonal-naive denominator is zero")]
    UndefinedMase,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
