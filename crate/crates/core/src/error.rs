use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The pixel grid is too coarse (or too small) to represent a mode.
    #[error("grid resolution: {0}")]
    Resolution(String),

    /// Outcome probabilities lose more mass than the grid tolerance allows.
    #[error("grid coverage: probabilities sum to {sum:.6} (deficit {deficit:.3e})")]
    GridCoverage { sum: f64, deficit: f64 },

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("memory guard: {required} entries exceed the cap of {cap}")]
    MemoryGuard { required: usize, cap: usize },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Format(_)
        )
    }
}
