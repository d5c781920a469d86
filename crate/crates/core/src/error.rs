use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point with norm {norm} lies outside the unit ball; normalize the cloud first")]
    OutOfBall { norm: f64 },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("bandwidth must be at least {min}, got {got}")]
    BandwidthTooSmall { got: usize, min: usize },

    #[error("bandwidth mismatch: {left} vs {right}")]
    BandwidthMismatch { left: usize, right: usize },

    #[error("harmonic degree {degree} must be below the bandwidth {bandwidth}")]
    DegreeOverflow { degree: usize, bandwidth: usize },

    #[error("matrix is not a rotation (orthonormality residual {residual:e}, det {det})")]
    NotRotation { residual: f64, det: f64 },

    #[error("configuration is at a gimbal singularity (sin(beta) = {sin_beta:e})")]
    Singular { sin_beta: f64 },

    #[error("requested {requested} points but the cloud has only {available}")]
    NotEnoughPoints { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("training diverged at epoch {epoch} (loss = {loss}); lower the learning rate")]
    Divergence { epoch: usize, loss: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("archive error: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by malformed or missing input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Archive(_)
                | Error::Io(_)
                | Error::EmptyCloud
                | Error::OutOfBall { .. }
        )
    }
}
