//! Error type shared across the simulator.

use thiserror::Error;

/// Errors surfaced by the simulator.
///
/// The variants map onto the CLI exit-code contract: configuration and
/// format errors are caller mistakes (exit 1), scenario errors mean a run
/// precondition failed (exit 2), everything else is internal (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (shape mismatch, bad ranges, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical blow-up (non-finite loss or gradient).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Data partitioning could not satisfy its postconditions.
    #[error("partition error: {0}")]
    Partition(String),
    /// A scenario precondition failed (e.g. the backdoor did not implant).
    #[error("scenario error: {0}")]
    Scenario(String),
    /// Evaluation on invalid inputs (empty test set, mismatched runs).
    #[error("evaluation error: {0}")]
    Eval(String),
    /// Malformed binary file (dataset or checkpoint).
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
