use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its mathematical domain (non-binary label, q = 0 in a bound, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input data (non-finite features, shape mismatch, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A noise specification or prior that does not cover the data, or is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A posterior lookup hit an undefined stratum (Pr(noisy label) = 0).
    #[error("evaluation error: posterior undefined for stratum {stratum} (instance {instance})")]
    UndefinedPosterior { stratum: String, instance: usize },

    /// A metric requiring ground truth was requested without it.
    #[error("capability error: {0}")]
    Capability(String),

    /// Rejection sampling gave up before collecting enough plausible draws.
    #[error(
        "rejection budget exhausted: accepted {accepted} of {attempts} draws \
         (acceptance rate {rate:.4}); consider a larger epsilon (see min_epsilon)"
    )]
    RejectionBudget {
        accepted: usize,
        attempts: u64,
        rate: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
