use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular kernel evaluation at the origin with zero regularization")]
    SingularEvaluation,

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error {error:e} above tolerance {tolerance:e}"
    )]
    QuadratureNonConvergence {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("density has zero mass")]
    ZeroMass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("particle {index} left the safety radius {radius} at t = {time}")]
    BlowUp {
        index: usize,
        radius: f64,
        time: f64,
    },

    #[error("non-finite position encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("tetrahedron {index} is degenerate (initial volume {volume:e})")]
    DegenerateTetrahedron { index: usize, volume: f64 },

    #[error("total masses differ: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("instance with {size} particles exceeds the exact solver cap of {cap}; use w1_approx")]
    SizeCap { size: usize, cap: usize },

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("value {value} outside the invertible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("trajectories do not share a time grid")]
    TimeGridMismatch,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
