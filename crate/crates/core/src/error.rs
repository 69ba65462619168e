use std::path::PathBuf;

use thiserror::Error;

/// Errors from reading or writing RIFF/WAVE files.
#[derive(Debug, Error)]
pub enum WavError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated WAV data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("WAV file holds no samples")]
    Empty,
}

/// Errors raised by the audio, transform, and model layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("loudness undefined: clip has no nonzero sample")]
    UndefinedLoudness,
    #[error("clip mismatch: {0}")]
    ClipMismatch(String),
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("clip too short: {len} samples, need at least {min}")]
    ClipTooShort { len: usize, min: usize },
    #[error("insufficient frames: have {have}, need {need}")]
    InsufficientFrames { have: usize, need: usize },
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("character {0:?} is outside the model alphabet")]
    OutOfAlphabet(char),
    #[error("empty text cannot be synthesized")]
    EmptyText,
    #[error("target needs {need} frames but only {have} are available")]
    TargetTooLong { need: usize, have: usize },
    #[error("reference transcript is empty")]
    EmptyReference,
    #[error("ratio undefined: zero baseline distance")]
    UndefinedRatio,
    #[error("training failed: {0}")]
    TrainingFailed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model format error: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
