use thiserror::Error;

pub type Result<T> = std::result::Result<T, PnmolError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnmolError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// No closed form is implemented for this operator/kernel combination.
    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// Cholesky factorization failed for every nugget on the jitter ladder.
    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A Schur complement came out clearly negative.
    #[error("negative error variance {value:e} at grid point {index}")]
    NegativeVariance { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl PnmolError {
    /// True for errors caused by the numerics rather than by caller input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PnmolError::Factorization(_)
                | PnmolError::NegativeVariance { .. }
                | PnmolError::Numerical(_)
        )
    }
}

impl From<std::io::Error> for PnmolError {
    fn from(e: std::io::Error) -> Self {
        PnmolError::Io(e.to_string())
    }
}

impl From<csv::Error> for PnmolError {
    fn from(e: csv::Error) -> Self {
        PnmolError::Io(e.to_string())
    }
}
