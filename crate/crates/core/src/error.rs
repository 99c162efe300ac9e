use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or configuration value violates one of its constraints.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    /// The observation grid does not fit what the operation needs.
    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("empty integration window [{t0}, {t})")]
    EmptyWindow { t0: f64, t: f64 },

    #[error("accumulated information matrix is singular at t = {t}")]
    SingularGram { t: f64 },

    #[error("estimate ({lambda}, {mu}) at t = {t} has a non-positive rate")]
    NonPositiveEstimate { t: f64, lambda: f64, mu: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input (configuration, schema, grid)
    /// rather than by a failure while computing.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. }
                | Error::Grid(_)
                | Error::Parse { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::File { .. }
        )
    }
}
