use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("attack magnitude {magnitude} exceeds the configured bound {bound}")]
    AttackOutOfBounds { magnitude: f64, bound: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error("simulation diverged at t = {t:.4} s: {what}")]
    Diverged { t: f64, what: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Configuration and modelling problems are distinguished from runtime
    /// failures so the CLI can map them to different exit codes.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::AttackOutOfBounds { .. }
                | Error::Dimension(_)
                | Error::Assumption(_)
                | Error::Json { .. }
        )
    }
}
