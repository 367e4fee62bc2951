use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("npy file {path}: {message}")]
    Npy { path: PathBuf, message: String },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("label/example count mismatch: {labels} labels for {examples} examples")]
    LabelCountMismatch { labels: usize, examples: usize },

    #[error("non-finite activation value at index {index:?}")]
    NonFiniteActivation { index: Vec<usize> },

    #[error("group {0:?} is empty after sampling")]
    EmptyGroup(String),

    #[error("requested {requested} examples but only {available} are available")]
    InsufficientExamples { requested: usize, available: usize },

    #[error("insufficient points for triangulation")]
    InsufficientPoints,

    #[error("non-finite values in {stage} at step {step}")]
    NonFinite { stage: &'static str, step: usize },

    #[error("neuron ids differ between layout and nap matrix")]
    NeuronIdMismatch,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
