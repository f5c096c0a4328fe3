//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two elements (or an element and a dataset) live in different spaces.
    #[error("block spec mismatch: {0}")]
    SpecMismatch(String),

    /// A block spec or element violates its construction invariants.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A dataset violates its construction invariants.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A basis dimension is outside `0..=basis.len()`.
    #[error("dimension {dim} out of range (basis size {size})")]
    DimensionOutOfRange { dim: usize, size: usize },

    /// The design carries no usable signal (e.g. all blocks zero).
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Non-finite values appeared during iteration.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A tuning-parameter selection rule could not produce an answer.
    #[error("selection failed: {0}")]
    Selection(String),

    /// An argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A file could not be parsed; location is 1-based where known.
    #[error("parse error in {path} (row {row}, column {column}): {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("manifest error: {0}")]
    Manifest(String),
}
