//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the dcoe library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A pivot fell below the Cholesky tolerance; the matrix is not a valid
    /// covariance matrix.
    #[error("matrix is not positive definite: pivot {pivot:e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// A covariance specification violates its parameter ranges.
    #[error("invalid covariance specification: {0}")]
    InvalidSpec(String),

    /// The signal count `s` passed to an FNP formula was not positive.
    #[error("signal count must be positive, got {0}")]
    NonpositiveS(f64),

    /// The FNP control level is outside (0, 1).
    #[error("beta must lie in (0, 1), got {0}")]
    InvalidBeta(f64),

    /// The FDR level is outside (0, 1).
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    /// An operation needed ground-truth signal indices that are absent or empty.
    #[error("ground-truth signal set is required but absent or empty")]
    MissingTruth,

    /// A null z-matrix failed validation (ragged rows, wrong width, non-finite
    /// entries, or a draw-count mismatch).
    #[error("invalid null matrix: {0}")]
    InvalidNullMatrix(String),

    /// Two containers that must agree in length do not.
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    /// A scalar argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid input (non-finite values, malformed data, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A simulation replication failed; the index is reported so the run can
    /// be reproduced in isolation.
    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
