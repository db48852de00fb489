//! Experiment runner: configuration files, the four run modes and their artifacts.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, FcltConfig, Mode, NetworkConfig};
pub use run::{run, RunOptions, RunSummary};
pub use verify::{verify, Check, VerifyReport};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl RunError {
    /// 1 for failed checks, 2 for configuration and i/o problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::ChecksFailed(_) => 1,
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Numeric(_) => 3,
        }
    }

    pub(crate) fn with_context(self, context: &str) -> Self {
        match self {
            RunError::Config(m) => RunError::Config(format!("{context}: {m}")),
            RunError::Numeric(m) => RunError::Numeric(format!("{context}: {m}")),
            other => other,
        }
    }
}

impl From<sncox::error::Error> for RunError {
    fn from(e: sncox::error::Error) -> Self {
        use sncox::error::Error as E;
        match e {
            E::Quadrature { .. } | E::NonFinite(_) | E::GridOverflow { .. } | E::Domain(_) => RunError::Numeric(e.to_string()),
            E::InvalidParameter { .. } | E::DimensionMismatch { .. } | E::OutOfRange { .. } | E::Cycle(_) | E::EventBudget { .. } => {
                RunError::Config(e.to_string())
            }
        }
    }
}
