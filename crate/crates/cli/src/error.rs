use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: `{key}`: {message}")]
    ConfigInvalid { key: String, message: String },
    #[error("non-finite value in table {table}, row {row}, column {column}")]
    NonFinite {
        table: String,
        row: usize,
        column: String,
    },
    #[error("interrupted after {completed} of {total} grid points; rerun to resume")]
    Interrupted { completed: usize, total: usize },
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            CliError::ConfigInvalid { key, .. } => Some(key),
            _ => None,
        }
    }

    /// 2 for configuration errors, 4 for a resumable interruption, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            CliError::Interrupted { .. } => 4,
            _ => 3,
        }
    }
}

impl From<pinlab::Error> for CliError {
    fn from(e: pinlab::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}
