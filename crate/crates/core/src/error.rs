use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid trait grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {got} points, at least {need} required")]
    GridTooSmall { got: usize, need: usize },

    #[error("vector is not unit length (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("subspace basis is rank deficient (vector {index} is dependent on its predecessors)")]
    RankDeficientSubspace { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("phenotypic covariance G + E is singular or ill-conditioned (condition number {condition:e})")]
    SingularPhenotypicCovariance { condition: f64 },

    #[error("unbalanced design: {0}")]
    UnbalancedDesign(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidGrid(_)
                | Error::GridTooSmall { .. }
                | Error::DimensionMismatch(_)
                | Error::Parse { .. }
                | Error::InvalidMatrix(_)
                | Error::InvalidCovariance(_)
                | Error::UnbalancedDesign(_)
                | Error::InsufficientData(_)
        )
    }
}
