use thiserror::Error;

/// Errors produced by the decoding library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid heatmap frame: {0}")]
    InvalidFrame(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tap has no heatmap but feature set {0} requires one")]
    MissingHeatmap(String),

    #[error("tap has no ground-truth label")]
    MissingLabel,

    #[error("character {0:?} is not one of the 28 candidate keys")]
    UnknownKey(char),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("layout fingerprint mismatch: model was trained for {expected}, loaded layout is {got}")]
    FingerprintMismatch { expected: String, got: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
