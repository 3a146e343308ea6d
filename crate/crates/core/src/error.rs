use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no records in input")]
    EmptyInput,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown facet '{facet}' (valid facets: {})", valid.join(", "))]
    UnknownFacet { facet: String, valid: Vec<String> },

    #[error("unknown value '{value}' for facet '{facet}' (nearest: {})", suggestions.join(", "))]
    UnknownValue {
        facet: String,
        value: String,
        suggestions: Vec<String>,
    },

    #[error("facet '{0}' is given more than once with different values")]
    ConflictingFacet(String),

    #[error("facet '{0}' has no training values")]
    NoTrainingValues(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("target index {index} out of range for vocabulary of size {size}")]
    TargetOutOfRange { index: u32, size: usize },

    #[error("distributions have different supports ({left} vs {right})")]
    SupportMismatch { left: usize, right: usize },

    #[error("not a valid {expected} file (bad magic bytes)")]
    BadMagic { expected: &'static str },

    #[error("unsupported {kind} format version {found} (expected {expected})")]
    UnsupportedVersion {
        kind: &'static str,
        found: u16,
        expected: u16,
    },

    #[error("schema fingerprint mismatch: checkpoint {found}, expected {expected}")]
    FingerprintMismatch { found: String, expected: String },

    #[error("truncated {0} file")]
    Truncated(&'static str),

    #[error("malformed {kind}: {message}")]
    Format { kind: &'static str, message: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the environment rather than by the input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
