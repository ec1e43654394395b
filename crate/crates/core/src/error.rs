use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Guard violations and numerical failures. Messages name the violated
/// guard so that front-ends can surface them verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected {expected} modes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero-power input: average power must be positive")]
    ZeroPower,

    #[error("importance sampling degenerate: all {samples} weights underflowed to zero")]
    DegenerateWeights { samples: u64 },

    #[error("quadrature dimension cap exceeded: {dims} real dimensions (max {max})")]
    DimensionCap { dims: usize, max: usize },

    #[error("quadrature did not converge: achieved relative tolerance {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },

    #[error("series validity guard: |gamma * correction| = {value:.3e} must be < 1 (use the small-noise branch)")]
    SeriesGuard { value: f64 },

    #[error("trajectory solver did not converge after {iterations} iterations (last relative residual {last:.3e})")]
    NotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("nonlinearity guard: gamma_tilde = {gamma_tilde:.3e} exceeds {limit}")]
    NonlinearityGuard { gamma_tilde: f64, limit: f64 },

    #[error("first-order bracket is non-positive ({value:.3e}); the first-order density is outside its validity range")]
    NegativeBracket { value: f64 },

    #[error("signal window too narrow: spectrum at the window edge is {edge:.3e} of its peak (need < {limit:.0e})")]
    WindowTooNarrow { edge: f64, limit: f64 },
}
