use thiserror::Error;

/// Command failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 2).
    #[error("{0}")]
    Validation(String),
    /// The computation itself failed (exit code 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Wrap a library error, keeping its validation/runtime class.
    pub fn from_core(context: &str, err: hyperqst::Error) -> Self {
        let msg = format!("{context}: {err}");
        if err.is_validation() {
            CliError::Validation(msg)
        } else {
            CliError::Runtime(msg)
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}

/// Attach context to a library result.
pub(crate) trait Context<T> {
    fn ctx(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for hyperqst::Result<T> {
    fn ctx(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(context, e))
    }
}
