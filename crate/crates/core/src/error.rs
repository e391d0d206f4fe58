use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest line {line}: parse error: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("manifest line {line}: invalid `{field}`: {message}")]
    ManifestValidation {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("malformed audio file: {0}")]
    MalformedAudio(String),

    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSynthSpec(String),

    #[error("invalid feature configuration: {0}")]
    InvalidFeatureConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("signal of {len} samples is shorter than one frame ({frame_len} samples)")]
    SignalTooShort { len: usize, frame_len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("state index {index} out of range for {num_states} states")]
    StateOutOfRange { index: usize, num_states: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model order {0} has no higher-order structure to reduce")]
    NothingToReduce(usize),

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("feature file: {0}")]
    FeatureFormat(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("registry: {0}")]
    Registry(String),

    #[error("classifier kind mismatch: registry holds {registry}, requested {requested}")]
    KindMismatch { registry: String, requested: String },

    #[error("feature fingerprint mismatch: expected {expected}, got {got}")]
    FingerprintMismatch { expected: String, got: String },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("missing features for utterance {0}")]
    MissingFeatures(String),

    #[error("statistics: {0}")]
    Statistics(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
