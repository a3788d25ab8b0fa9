use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ForceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ForceError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown dataset schema '{0}' (expected diabetes, heart or credit)")]
    UnknownSchema(String),

    #[error("column '{0}' has no observed values")]
    ColumnAllMissing(String),

    #[error("continuous column '{0}' has zero variance on the training rows")]
    ZeroVariance(String),

    #[error("class {class} has {count} members, need at least {required}")]
    ClassTooSmall {
        class: u8,
        count: usize,
        required: usize,
    },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("background set is empty")]
    EmptyBackground,

    #[error("exact Shapley enumeration refused for {0} features (limit 15)")]
    TooManyFeatures(usize),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("k = {k} exceeds the number of points {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },

    #[error("malformed model text at line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ForceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ForceError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ForceError::NonFinite(_) | ForceError::Divergence { .. } | ForceError::EmptyCluster(_)
        )
    }
}
