use std::path::PathBuf;

use thiserror::Error;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for malformed flags, config or inputs.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status when the requested quantity is not identified from the
/// inputs.
pub const EXIT_IDENTIFICATION: i32 = 3;
/// Exit status for a report that fails its own schema, which is a bug.
pub const EXIT_INTERNAL: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("{0}")]
    Validation(String),
    #[error("{}: line {line}: {message}", .path.display())]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", .path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}: {source}", .path.display())]
    Input {
        path: PathBuf,
        source: transport_core::Error,
    },
    #[error(transparent)]
    Core(#[from] transport_core::Error),
    #[error("{0}")]
    NotIdentified(String),
    #[error("report does not match its schema: {0}")]
    Schema(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) if !e.use_stderr() => EXIT_OK,
            CliError::Input { source: e, .. } | CliError::Core(e)
                if e.is_identification_failure() =>
            {
                EXIT_IDENTIFICATION
            }
            CliError::NotIdentified(_) => EXIT_IDENTIFICATION,
            CliError::Schema(_) => EXIT_INTERNAL,
            _ => EXIT_VALIDATION,
        }
    }

    /// Stable machine-readable label for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Input { .. } => "input",
            CliError::Core(_) => "computation",
            CliError::NotIdentified(_) => "not-identified",
            CliError::Schema(_) => "schema",
        }
    }

    /// Config errors from the key-value parser carry their line.
    pub(crate) fn config_input(path: PathBuf, source: transport_core::Error) -> CliError {
        match source {
            transport_core::Error::Parse { line, message, .. } => CliError::Config {
                path,
                line,
                message,
            },
            source => CliError::Input { path, source },
        }
    }
}
