//! Library surface of the CLI so the pipeline can be driven in-process
//! (the acceptance suite does exactly that).

pub mod config;
pub mod pipeline;
pub mod plot;

use entropic_ood_core::error::Error as CoreError;

/// Process exit codes: 2 config error, 3 data error, 4 numerical abort.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 4,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Parse { .. } | CoreError::Format(_) | CoreError::Io(_) => 3,
            CoreError::Numerical(_) => 4,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}
