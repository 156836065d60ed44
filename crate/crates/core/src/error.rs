use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite {field} value at node {node}")]
    NonFinite { field: &'static str, node: usize },

    #[error("integrator step size underflow at t = {t:.6e} (nondimensional)")]
    StepUnderflow { t: f64 },

    #[error("integrator exceeded {max_steps} steps before reaching the horizon (t = {t:.6e})")]
    TooManySteps { max_steps: usize, t: f64 },

    #[error("negative {field} density {value:.3e} at node {node}, t = {t:.6e} (nondimensional)")]
    NegativeDensity {
        field: &'static str,
        node: usize,
        value: f64,
        t: f64,
    },

    #[error("matrix is not positive definite after {retries} jitter retries (last jitter {jitter:.3e})")]
    NotPositiveDefinite { retries: usize, jitter: f64 },

    #[error("{failed} of {total} forward-model evaluations failed (limit 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("sampler stalled: no walker accepted a proposal in the last {window} steps; the MCMC acceptance ratio is small, narrow the parameter range or revise the priors")]
    SamplerStalled { window: usize },

    #[error(
        "could not find finite starting points for {n_walkers} walkers after {attempts} attempts; revise the prior box"
    )]
    NoFiniteStart { n_walkers: usize, attempts: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
