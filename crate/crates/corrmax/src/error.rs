//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A data row that could not be parsed (ragged or non-numeric).
    /// `row` is the 1-based line number in the input file.
    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    /// Malformed binary container (bad magic, truncation, size mismatch).
    #[error("bad matrix file: {0}")]
    Format(String),

    /// Dimensions unusable for the requested computation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A NaN or infinity where a finite observation was required.
    /// Indices are 1-based.
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    /// A column with (numerically) zero centered sum of squares, for which
    /// the correlation coefficient is undefined. 1-based column number.
    #[error("degenerate column {0}: centered sum of squares is numerically zero")]
    DegenerateColumn(usize),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distribution/operation combination the library does not evaluate.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
