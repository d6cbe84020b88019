use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing {}: run `glycofde {command}` first", artifact.display())]
    Dependency { artifact: PathBuf, command: &'static str },

    #[error(transparent)]
    Core(#[from] glycofde::Error),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_DATA: i32 = 3;
    pub const EXIT_DEPENDENCY: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(glycofde::Error::Config(_)) => Self::EXIT_CONFIG,
            CliError::Dependency { .. } => Self::EXIT_DEPENDENCY,
            CliError::Core(_) => Self::EXIT_DATA,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
