use thiserror::Error;

/// Errors raised by the spectral laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot rescale zero state")]
    ZeroState,

    #[error("non-finite result in {0}")]
    NonFinite(&'static str),

    #[error("nonlinearity degenerate at this data size (1 + N = {value:.6e} at mode {index})")]
    Degenerate { index: usize, value: f64 },

    #[error("rk4 stability guard violated: dt = {dt:.6e} exceeds the admissible {max_dt:.6e}")]
    StabilityGuard { dt: f64, max_dt: f64 },

    #[error("midpoint iteration failed to converge at t = {time}")]
    FixedPoint { time: f64 },

    #[error("step failed at t = {time}: {source}")]
    Step { time: f64, source: Box<Error> },

    #[error("linearized flow implemented for model case only")]
    NotModelCase,

    #[error("grid mismatch: expected {expected} modes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("finite difference index {index} out of range for series of length {len}")]
    StencilRange { index: usize, len: usize },

    #[error("time grid is not uniform")]
    NonUniformSeries,
}

pub type Result<T> = std::result::Result<T, Error>;
