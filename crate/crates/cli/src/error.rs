use std::fmt;

use qswitch_core::ErrorKind;

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Validation,
    Numerical,
    Check,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Validation => 1,
            Failure::Numerical => 2,
            Failure::Check => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub failure: Failure,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { failure: Failure::Validation, message: message.into() }
    }

    pub fn check(message: impl Into<String>) -> Self {
        Self { failure: Failure::Check, message: message.into() }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::validation(format!("cannot write {}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<qswitch_core::Error> for CliError {
    fn from(e: qswitch_core::Error) -> Self {
        let failure = match e.kind() {
            ErrorKind::Numerical => Failure::Numerical,
            ErrorKind::Validation | ErrorKind::Configuration => Failure::Validation,
        };
        Self { failure, message: e.to_string() }
    }
}
