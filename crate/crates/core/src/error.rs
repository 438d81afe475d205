use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "manifold dimension {0} is not supported (the gap-index formula is singular at d = 2)"
    )]
    UnsupportedDimension(u32),

    #[error("response is amplifying: max |h| = {max_abs} on the spectrum (must be < 1)")]
    AmplifyingResponse { max_abs: f64 },

    #[error("polynomial fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("cluster is not separated from the rest of the spectrum (gap = {gap})")]
    IllSeparatedCluster { gap: f64 },

    #[error("stability bound is unbounded: epsilon ({epsilon}) must be < alpha ({alpha})")]
    UnboundedBound { epsilon: f64, alpha: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("training diverged at iteration {iteration}: objective is not finite")]
    TrainingDiverged { iteration: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics themselves rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::TrainingDiverged { .. } | Error::DegenerateFit(_)
        )
    }
}

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
