use thiserror::Error;

/// Process exit status contract: 0 success, 1 numeric failure, 2 bad input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Numeric = 1,
    Input = 2,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Input,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Numeric,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }

    /// Prefixes the message with the stage or file it came from.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<sparsevar_core::Error> for CliError {
    fn from(e: sparsevar_core::Error) -> Self {
        let kind = if e.is_input_error() { ExitKind::Input } else { ExitKind::Numeric };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(e.to_string())
    }
}
