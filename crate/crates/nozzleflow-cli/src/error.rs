//! Command errors and their exit codes.

use serde_json::json;
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid override {0}")]
    Override(String),
    #[error("invalid NOZZLEFLOW_THREADS: {0}")]
    Threads(String),
    #[error(transparent)]
    Solver(#[from] nozzleflow::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} acceptance criteria failed")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse(_) | CliError::Invalid(_) | CliError::Override(_) | CliError::Threads(_) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Write { .. } | CliError::ValidationFailed(_) => EXIT_SOLVER,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Read { .. } => "ConfigRead",
            CliError::Parse(_) => "ConfigParse",
            CliError::Invalid(_) => "ConfigInvalid",
            CliError::Override(_) => "ConfigOverride",
            CliError::Threads(_) => "ConfigThreads",
            CliError::Solver(e) => e.name(),
            CliError::Write { .. } => "OutputWrite",
            CliError::ValidationFailed(_) => "ValidationFailed",
        }
    }

    /// One-line machine-readable form.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}
