use keyloom_core::Error;
use thiserror::Error as ThisError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, ThisError)]
pub enum CliError {
    /// Bad input: files, flags, configs, data.
    #[error("{0}")]
    User(String),
    /// A bug or numerical failure inside the engine.
    #[error("internal error: {0}")]
    Internal(String),
    /// `verify` ran and a check failed.
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Shape { .. } | Error::Index { .. } | Error::Contract(_) | Error::Autodiff(_) | Error::NonFiniteLoss { .. } => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

/// Attach a path to an engine error.
pub fn at(path: &std::path::Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::User(m) => CliError::User(format!("{}: {m}", path.display())),
        CliError::Internal(m) => CliError::Internal(format!("{}: {m}", path.display())),
        other => other,
    }
}
