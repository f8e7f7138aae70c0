use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown axis `{axis}` for scheme {scheme}")]
    UnknownAxis { axis: String, scheme: String },

    #[error("store {path}: {message}")]
    StoreOpen { path: PathBuf, message: String },

    #[error("invalid store records: {0}")]
    StoreWrite(String),

    #[error("no embedding records for term `{0}` under the selected layers/contexts")]
    MissingTerm(String),

    #[error("layer {layer} out of range for a store with {layer_count} layers")]
    LayerOutOfRange { layer: usize, layer_count: usize },

    #[error("empty pole: no term of {axis}/{direction} resolves in the store")]
    EmptyPole { axis: String, direction: String },

    #[error("degenerate space: basis rank below {expected} (dependent axes: {})", axes.join(", "))]
    DegenerateSpace { expected: usize, axes: Vec<String> },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("standardization failed on `{axis}`: values are constant")]
    ConstantValues { axis: String },

    #[error("sample too small: need at least {needed} values, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid template `{template}`: {message}")]
    Template { template: String, message: String },

    #[error("invalid synth spec: {0}")]
    Synth(String),

    #[error("render: {0}")]
    Render(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, arguments, data)
    /// rather than by a fault in the tool itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NonFinite(_))
    }
}
