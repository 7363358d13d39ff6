use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid target set: {0}")]
    InvalidTargetSet(String),
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("angle {0} deg outside [-90, 90]")]
    AngleOutOfRange(f64),
    #[error("frequency {freq} not mappable to an angle with d/lambda = {spacing}")]
    UnmappableFrequency { freq: f64, spacing: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("reference element must equal 1, got {0}")]
    InvalidReference(String),
    #[error("degenerate calibration: element {index} has magnitude {magnitude:e}")]
    DegenerateCalibration { index: usize, magnitude: f64 },
    #[error("degenerate reference channel: |psi_hat[0]| = {0:e}")]
    DegenerateReference(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
