//! Crate-wide error type.
//!
//! Numeric degeneracy inside one chunk (ill-conditioned factorization or
//! ambiguity system) is reported as [`Error::ChunkFailure`] so the caller
//! can skip that chunk and keep the rest of the frame; everything else is
//! either a configuration problem, an internal shape bug, or I/O.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (field ranges, bit budgets,
    /// mismatched input lengths).
    #[error("configuration error: {0}")]
    Config(String),

    /// A chunk could not be decoded because a numeric subproblem degenerated
    /// (e.g. near-singular normal equations or ambiguity matrix). The chunk
    /// is abandoned; other chunks are unaffected.
    #[error("chunk failure: {0}")]
    ChunkFailure(String),

    /// Shape or invariant violation that indicates a bug in the caller or
    /// in this crate, not in the data.
    #[error("internal error: {0}")]
    Internal(String),

    /// File I/O or serialization failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Config file parse failure.
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for configuration errors.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Convenience constructor for chunk failures.
    pub fn chunk(msg: impl Into<String>) -> Self {
        Error::ChunkFailure(msg.into())
    }

    /// Convenience constructor for internal errors.
    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
