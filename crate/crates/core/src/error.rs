use thiserror::Error;

/// Errors raised by the propagators and spectrum builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step too large for prefactor continuity (phase increment {increment:.3} rad at t = {t:.6e})")]
    PhaseDiscontinuity { increment: f64, t: f64 },

    #[error("trajectory escaped at t = {t:.6e}")]
    TrajectoryEscaped { t: f64 },

    #[error("prefactor underflow at t = {t:.6e}")]
    PrefactorUnderflow { t: f64 },

    #[error("kernel blow-up at step {step}")]
    KernelBlowUp { step: usize },

    #[error("A-matrix invariant violated: {0}")]
    AMatrixInvariant(String),

    #[error("grid too small: edge probability {edge:.3e} at step {step}")]
    GridTooSmall { edge: f64, step: usize },

    #[error("dt too large: norm drift {drift:.3e} at step {step}")]
    NormDrift { drift: f64, step: usize },

    #[error("signal length mismatch: expected {expected} samples with dt = {dt}, got {got}")]
    SignalMismatch { expected: usize, got: usize, dt: f64 },

    #[error("spectrum energies already shifted by the bath zero-point energy")]
    AlreadyShifted,

    #[error("level {level} is at or above the dissociation bound ({bound} bound levels)")]
    AboveDissociation { level: usize, bound: usize },

    #[error("unknown method `{name}` (available: {available})")]
    UnknownMethod { name: String, available: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
