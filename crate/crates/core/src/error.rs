use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid uncertainty set: {0}")]
    InvalidSet(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("subproblem did not converge after {iterations} iterations (gap {gap:e})")]
    NoConvergence {
        iterations: usize,
        gap: f64,
        best: Box<crate::subproblem::SubproblemSolution>,
    },

    #[error("line search failed after {backtracks} backtracks (last step {last_step:e})")]
    LineSearch { last_step: f64, backtracks: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
