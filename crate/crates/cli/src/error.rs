use std::fmt;
use std::process::ExitCode;

/// A failed command. Input problems exit with 2, everything else with 3.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

/// Attaches a classification and a context string to any displayable error.
pub trait Classify<T> {
    fn input(self, context: &str) -> Result<T, CliError>;
    fn internal(self, context: &str) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> Classify<T> for Result<T, E> {
    fn input(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Input(format!("{context}: {e}")))
    }

    fn internal(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Internal(format!("{context}: {e}")))
    }
}
