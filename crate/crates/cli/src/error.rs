use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ri_onset::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical blowup, 4 for
    /// quadrature failure, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use ri_onset::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidParameter(_) | E::Contract(_)) => 2,
            CliError::Core(E::Blowup { .. }) => 3,
            CliError::Core(E::Quadrature { .. }) => 4,
            CliError::Core(_) | CliError::Io { .. } | CliError::Json(_) => 1,
        }
    }
}
