use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// `K + Σ` could not be factorized even at the largest jitter level.
    #[error("singular gram matrix: points {first} and {second} are (nearly) coincident without observation noise")]
    SingularGram { first: usize, second: usize },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("posterior variance {value:e} is negative beyond round-off tolerance")]
    NegativeVariance { value: f64 },

    #[error("regressors are not persistently exciting (smallest normalized singular value {smallest_singular_value:e})")]
    PersistencyOfExcitation { smallest_singular_value: f64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("operating point {point:?} lies outside the operating box")]
    OutsideBox { point: Vec<f64> },

    #[error("no local model estimates supplied")]
    EmptyEstimates,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("configuration error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: unsupported format version {found} (supported major version {supported})")]
    UnsupportedVersion {
        path: PathBuf,
        found: String,
        supported: u32,
    },

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input files).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularGram { .. }
            | Error::NumericalDegeneracy(_)
            | Error::NegativeVariance { .. }
            | Error::PersistencyOfExcitation { .. }
            | Error::NonFinite(_) => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
