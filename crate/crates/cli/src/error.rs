use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }

    /// Precondition errors are validation failures; numerical ones are
    /// runtime failures.
    pub fn from_core(err: kt_core::Error) -> Self {
        use kt_core::Error as E;
        match err {
            E::InvalidParameter { name, reason } => {
                CliError::Validation(format!("{name} {reason}"))
            }
            E::Instability { .. } => CliError::Runtime(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}
