use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{path}:{row}:{column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dataset has no labeled points")]
    NoLabels,

    #[error("vertex {0} is isolated in the neighbour graph; increase knn")]
    IsolatedVertex(usize),

    #[error("graph is disconnected ({0} near-zero Laplacian eigenvalues)")]
    Disconnected(usize),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("ζ = {zeta} lies outside the secular domain (ζ < δ)")]
    OutsideSecularDomain { zeta: f64 },

    #[error("matrix is numerically zero: {0}")]
    Degenerate(&'static str),

    #[error("ill-conditioned problem: {0}")]
    IllConditioned(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
