use std::fmt;

use sacdnet_core::Error;

/// Failure classes, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Internal,
    MissingInput,
    Config,
    Divergence,
    Data,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Internal => 1,
            ErrorClass::MissingInput => 3,
            ErrorClass::Config => 4,
            ErrorClass::Divergence => 5,
            ErrorClass::Data => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Internal => "internal",
            ErrorClass::MissingInput => "missing-input",
            ErrorClass::Config => "config",
            ErrorClass::Divergence => "divergence",
            ErrorClass::Data => "data",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.class.as_str(), self.message)
    }
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Config, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.class.as_str(),
            "exit_code": self.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorClass::MissingInput,
            Error::Io { .. } | Error::NoGraph | Error::NonScalarLoss(_) => ErrorClass::Internal,
            Error::InvalidArgument(_) => ErrorClass::Config,
            Error::Divergence { .. } => ErrorClass::Divergence,
            _ => ErrorClass::Data,
        };
        Self::new(class, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
