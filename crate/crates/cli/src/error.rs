use std::path::PathBuf;

use bitalloc::evaluators::EvalError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid input files. Exit code 2.
    #[error("{0}")]
    Config(String),

    /// Anything that fails once the inputs were accepted. Exit code 1.
    #[error("{0}")]
    Runtime(String),

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Write { .. } => 1,
        }
    }

    /// Classifies an error raised while loading inputs.
    pub fn config(err: bitalloc::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<bitalloc::Error> for CliError {
    fn from(err: bitalloc::Error) -> Self {
        use bitalloc::Error as E;
        match err {
            E::InvalidSpace(_) | E::InvalidParameter(_) => CliError::Config(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        CliError::Runtime(format!("evaluation failed: {err}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
