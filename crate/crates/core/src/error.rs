use std::io;

use thiserror::Error;

/// Errors produced while building, querying, evaluating or persisting an index.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    #[error("parameter out of range: {0}")]
    Parameter(String),

    /// Two operands disagree on a dimension.
    #[error("shape mismatch: {what} (expected {expected}, got {actual})")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Requested tree depth would leave some leaves empty.
    #[error("tree depth {depth} exceeds floor(log2 n) = {max} for n = {n}")]
    Depth { depth: usize, max: usize, n: usize },

    /// An index or candidate refers to a point that does not exist.
    #[error("integrity violation: {0}")]
    Integrity(String),

    /// Malformed or truncated input file.
    #[error("format error: {0}")]
    Format(String),

    /// Index file was written by an incompatible version.
    #[error("unsupported index format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// Index was built over a different dataset.
    #[error("dataset checksum mismatch: index has {expected:016x}, data has {actual:016x}")]
    Checksum { expected: u64, actual: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
