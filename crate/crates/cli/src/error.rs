use thiserror::Error;

use dpsyn_providers::ProviderError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),

    #[error("demo {demo}: {source}")]
    InDemo {
        demo: usize,
        #[source]
        source: ProviderError,
    },

    #[error("calibration infeasible: {0}")]
    Calibration(dpsyn_core::Error),

    #[error(transparent)]
    Core(#[from] dpsyn_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 configuration, 3 provider, 4 calibration, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Provider(ProviderError::Config(_) | ProviderError::Template(_)) => 2,
            CliError::Provider(_) | CliError::InDemo { .. } => 3,
            CliError::Calibration(_) => 4,
            CliError::Core(dpsyn_core::Error::InvalidParameter { .. }) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
