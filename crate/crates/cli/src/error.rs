use std::path::PathBuf;

use thiserror::Error;
use vme_core::VmeError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", parse_message(.line, .message))]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] VmeError),
}

fn parse_message(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("parse error at line {l}: {message}"),
        None => format!("parse error: {message}"),
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 3 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::Io { .. } | CliError::Solver(_) => 3,
        }
    }
}
