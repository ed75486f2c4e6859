use std::path::PathBuf;

use thiserror::Error;

use crate::quarter::Quarter;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: missing required column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("data: {0}")]
    Data(String),

    #[error("insufficient cross-section at {quarter}: {count} institutions, need at least 10")]
    InsufficientCrossSection { quarter: Quarter, count: usize },

    #[error("rate series does not cover {0}")]
    Alignment(Quarter),

    #[error("design matrix is rank deficient (rank {rank} of {cols})")]
    Singular { rank: usize, cols: usize },

    #[error("insufficient data: {needed} observations needed, {got} available")]
    InsufficientData { needed: usize, got: usize },

    #[error("series has no variation")]
    InsufficientVariation,

    #[error("leading {0}-row subdesign is singular and no later start is invertible")]
    DegenerateStart(usize),

    #[error("innovation variance degenerate at t={t} (H={value:e})")]
    CovarianceDegeneracy { t: usize, value: f64 },

    #[error("optimizer failed on every start; best log-likelihood {best_loglik}")]
    Optimization { best_point: Vec<f64>, best_loglik: f64 },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Schema { .. }
            | Error::Data(_)
            | Error::InsufficientCrossSection { .. }
            | Error::Alignment(_)
            | Error::InsufficientData { .. }
            | Error::InsufficientVariation => ErrorClass::Data,
            Error::Singular { .. }
            | Error::DegenerateStart(_)
            | Error::CovarianceDegeneracy { .. }
            | Error::Optimization { .. } => ErrorClass::Numerical,
        }
    }
}
