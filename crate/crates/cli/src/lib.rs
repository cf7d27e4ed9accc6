//! Configuration loading, experiment commands and CSV output for the
//! `crowdvote` binary.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use config::ScenarioConfig;
pub use output::{ResultsRow, CSV_HEADER, SCHEMA_VERSION};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVARIANT: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_WITNESS: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invariant violated at `{key}`: {message}")]
    Invariant { key: String, message: String },
    #[error("{0}")]
    Budget(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn invariant(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invariant {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Invariant { .. } | CliError::Io(_) => EXIT_INVARIANT,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}
