use std::path::PathBuf;

use bohmlab::cointoss::TossError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("verdict is 'refuted' and --expect-consistent was given")]
    Refuted,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
            CliError::Refuted => 3,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<TossError> for CliError {
    fn from(e: TossError) -> Self {
        match e {
            TossError::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
