use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("truncation guard violated: {what} needs dim >= {required}, got {dim}")]
    Truncation {
        what: String,
        required: usize,
        dim: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "trace drift {drift:.3e} at t = {time} ns exceeds tolerance; reduce dt (currently {dt} ns)"
    )]
    StepSize { drift: f64, time: f64, dt: f64 },

    #[error("halving dt changes r by {change:.3e}; reduce dt (currently {dt} ns)")]
    CoarseStep { change: f64, dt: f64 },

    #[error("solver diverged at t = {time} ns (non-finite state entries)")]
    Divergence { time: f64 },

    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("peak detection failed: {0}")]
    PeakDetection(String),

    #[error("empty record: {0}")]
    EmptyRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
