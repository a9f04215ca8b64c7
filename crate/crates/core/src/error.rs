use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("band edge above Nyquist: f_hi={f_hi} Hz > {nyquist} Hz")]
    AboveNyquist { f_hi: f64, nyquist: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("degenerate autocorrelation: r[0]={0}")]
    DegenerateAutocorrelation(f64),
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("unstable model: non-finite envelope at sample {0}")]
    UnstableModel(usize),
    #[error("band {band}: {source}")]
    Band {
        band: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("decay exceeds RIR length: t60={t60} s > duration={duration} s")]
    DecayExceedsLength { t60: f64, duration: f64 },
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("undefined SNR: input is silent")]
    UndefinedSnr,
    #[error("path collision: {0}")]
    PathCollision(PathBuf),
    #[error("unsupported WAV: {field}={actual} (expected {expected})")]
    UnsupportedWav {
        field: &'static str,
        actual: String,
        expected: String,
    },
    #[error("negative envelope value {value} at index {index}")]
    NegativeEnvelope { index: usize, value: f64 },
    #[error("non-positive value {value} at index {index}; cannot take log")]
    NonPositive { index: usize, value: f64 },
    #[error("tape already consumed")]
    TapeConsumed,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corrupt file at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("unexpected end of file at byte {offset}")]
    UnexpectedEof { offset: u64 },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DegenerateAutocorrelation(_)
            | Error::IllConditioned(_)
            | Error::UnstableModel(_)
            | Error::UndefinedSnr => ErrorKind::Numerical,
            Error::Band { source, .. } => source.kind(),
            Error::Io { .. } | Error::Wav { .. } | Error::UnexpectedEof { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
