use thiserror::Error;

/// Failure classes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested parameter sits on (or too close to) a threshold `64 k pi^2`
    /// where the degree is undefined.
    #[error("tau = {tau} is within tolerance of the threshold 64*{k}*pi^2 = {threshold}")]
    Threshold { tau: f64, k: u64, threshold: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("operation undefined on this input: {0}")]
    Domain(String),

    #[error("{op} is not supported on {mesh} meshes")]
    Unsupported { op: &'static str, mesh: &'static str },

    #[error("Newton iteration failed to converge: {0}")]
    NoConvergence(String),

    #[error("flow stalled at t = {t} (step {dt:e}, gradient norm {grad_norm:e})")]
    FlowStall { t: f64, dt: f64, grad_norm: f64 },

    #[error("retraction failed: flow became stationary at level {level} above target {target}")]
    RetractionFailure { level: f64, target: f64 },

    #[error("search was inconclusive: {0}")]
    Inconclusive(String),

    #[error("no non-degenerate perturbation found among {samples} samples")]
    SardRetry { samples: usize },

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
