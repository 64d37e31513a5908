//! Configuration-driven scenario runner for `pdae-lq`.

pub mod config;
pub mod lqr;
pub mod output;
pub mod run;
pub mod svg;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Pipeline(#[from] pdae_lq::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{failed} verification check(s) failed")]
    ChecksFailed { failed: usize },
}

impl CliError {
    /// 1: configuration, 2: violated assumption, 3: numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Pipeline(e) if e.is_assumption() => 2,
            CliError::Pipeline(_) | CliError::ChecksFailed { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "Config",
            CliError::Io(_) => "Io",
            CliError::Pipeline(e) => e.kind(),
            CliError::ChecksFailed { .. } => "ChecksFailed",
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
