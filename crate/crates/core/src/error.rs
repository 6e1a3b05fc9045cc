use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty waveform")]
    EmptyWaveform,

    #[error("unsupported sample rate {found} Hz (expected {expected} Hz)")]
    SampleRate { expected: u32, found: u32 },

    #[error("unsupported channel count {0} (expected mono)")]
    ChannelCount(u16),

    #[error("unsupported sample encoding: {0}")]
    Encoding(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("missing layer `{0}`")]
    MissingLayer(String),

    #[error("unexpected layer `{0}`")]
    UnexpectedLayer(String),

    #[error("shape mismatch for layer `{name}`: expected {expected:?}, found {found:?}")]
    LayerShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("config digest mismatch: bundle {found}, config {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("malformed weight bundle: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl std::fmt::Debug,
    found: impl std::fmt::Debug,
) -> Error {
    Error::Shape {
        context,
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    }
}
