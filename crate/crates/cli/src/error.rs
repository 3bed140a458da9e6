use std::io;
use std::path::PathBuf;

use burstpdmp_core::Error as CoreError;

/// Errors surfaced by the command line, each with a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{failed} of {total} checks failed")]
    CheckFailed { failed: usize, total: usize },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Re-labels a core configuration error with the config section it came from.
    pub fn in_section(section: &str, err: CoreError) -> Self {
        match err {
            CoreError::Config { field, message } => CliError::config(format!("{section}.{field}"), message),
            CoreError::Domain(message) | CoreError::Unsupported(message) => CliError::config(section, message),
            other => CliError::Core(other),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 I/O failure, 2 configuration error, 3 numeric error,
    /// 4 failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::Config { .. }
                | CoreError::Domain(_)
                | CoreError::GridMismatch(_)
                | CoreError::Unsupported(_)
                | CoreError::UnsupportedClosure => 2,
                CoreError::Numeric { .. } | CoreError::SafetyCap { .. } | CoreError::DegenerateHistogram { .. } => 3,
            },
            CliError::Io { .. } => 1,
            CliError::CheckFailed { .. } => 4,
        }
    }
}
