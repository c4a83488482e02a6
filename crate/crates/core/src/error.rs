use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("states {k} and {l} are degenerate at xi = {xi:.6e} (gap {gap:.3e})")]
    Degenerate { k: usize, l: usize, xi: f64, gap: f64 },

    #[error("integration failed at t = {t:.6e}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("field {xi:.6e} outside adiabatic table range [{min:.6e}, {max:.6e}]")]
    OutOfTableRange { xi: f64, min: f64, max: f64 },

    #[error("adiabatic table is not gauge fixed")]
    GaugeNotFixed,

    #[error("non-finite control update at iteration {iteration}")]
    NonFiniteControl { iteration: usize },

    #[error("{failed} of {total} ensemble samples failed")]
    EnsembleFailed { failed: usize, total: usize },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    ConfigIssues(Vec<String>),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { path: path.into(), reason: reason.into() }
    }
}
