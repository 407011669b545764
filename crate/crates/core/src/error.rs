use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators, distributions, policies and the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("estimator needs at least one sample")]
    EmptySamples,

    #[error("missing required parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("arm index {index} out of range for {arms} arms")]
    ArmIndex { index: usize, arms: usize },

    #[error("policy selection before every arm was pulled once (arm {0} unpulled)")]
    NotInitialized(usize),

    #[error("numerical routine `{routine}` did not converge: {detail}")]
    NoConvergence { routine: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace invariant violated: {0}")]
    Invariant(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }

    /// True for errors caused by bad user input (config, parameters) rather than
    /// failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::MissingParameter(_)
                | Error::InvalidParameter(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
