use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("anchors {from} and {to} are not connected in the neighbor graph")]
    Unreachable { from: usize, to: usize },
    #[error("mean normal over the deformation region vanishes (norm {0:e})")]
    DegenerateNormal(f64),
    #[error("plane band is empty: the plane misses the object")]
    EmptyBand,
    #[error("hull mask is empty: no point within {epsilon} of the hull surface; try a larger epsilon")]
    EmptyMask { epsilon: f64 },
    #[error("removal would delete all {0} points")]
    OverRemoval(usize),
    #[error("dropout would leave {remaining} points (minimum {minimum})")]
    OverDropout { remaining: usize, minimum: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("instruction rejected: {0}")]
    Instruction(String),
    #[error("feature fingerprint mismatch: bank {bank}, features {features}")]
    FingerprintMismatch { bank: String, features: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps a synthesis failure with the context of the instruction that caused it.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::Instruction(msg) => Error::Instruction(format!("{context}: {msg}")),
            other => Error::Instruction(format!("{context}: {other}")),
        }
    }
}
