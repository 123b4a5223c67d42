use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header in {path} at line {line}, column {column}: {message}")]
    MalformedHeader {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("channel count mismatch in {path}: {message}")]
    ChannelCountMismatch { path: PathBuf, message: String },

    #[error("non-finite sample in {path} at byte offset {byte_offset} (channel {channel}, sample {sample})")]
    NonFiniteSample {
        path: PathBuf,
        byte_offset: u64,
        channel: usize,
        sample: usize,
    },

    #[error("malformed feature file {path} at line {line}: {message}")]
    MalformedFeatures {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid trial: {0}")]
    InvalidTrial(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("nyquist violation: {0}")]
    Nyquist(String),

    #[error("filter design failed: {0}")]
    FilterDesign(String),

    #[error("trial too short: {samples} samples, need at least {needed} for one window")]
    TooShort { samples: usize, needed: usize },

    #[error("invalid band table: {0}")]
    InvalidBands(String),

    #[error("band {band} ({high_hz} Hz) is beyond nyquist ({nyquist_hz} Hz)")]
    BandBeyondNyquist {
        band: String,
        high_hz: f64,
        nyquist_hz: f64,
    },

    #[error("unknown band {0}")]
    UnknownBand(String),

    #[error("channel {0} missing from feature tensor")]
    MissingChannel(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("feature kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("non-finite value while smoothing column {column}")]
    NonFinite { column: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("class {0} has no training samples")]
    EmptyClass(usize),

    #[error("logistic regression did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("label set mismatch: {0}")]
    LabelMismatch(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
