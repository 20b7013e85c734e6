use std::process::ExitCode;

use pdns_core::identity::IdentityError;
use pdns_core::txflow::TxError;
use thiserror::Error;

/// Every failure a command can end with, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad input files, or a data directory in the wrong state.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Denied(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Denied(_) => 3,
            CliError::NotFound(_) => 4,
            CliError::Internal(_) => 5,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Denied(_) => "denied",
            CliError::NotFound(_) => "not_found",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{prefix}: {m}")),
            CliError::Denied(m) => CliError::Denied(format!("{prefix}: {m}")),
            CliError::NotFound(m) => CliError::NotFound(format!("{prefix}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{prefix}: {m}")),
        }
    }
}

impl From<TxError> for CliError {
    fn from(e: TxError) -> Self {
        let text = match &e {
            TxError::AccessDenied => "AccessDenied".to_string(),
            TxError::NotFound => "NotFound".to_string(),
            TxError::Purged => "Purged: private data no longer held".to_string(),
            other => other.to_string(),
        };
        match e {
            TxError::AccessDenied | TxError::PolicyViolation(_) => CliError::Denied(text),
            TxError::NotFound | TxError::Purged => CliError::NotFound(text),
            TxError::InvalidRecord(_) | TxError::Query(_) | TxError::InvalidConfig(_) => CliError::Usage(text),
            _ => CliError::Internal(text),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<IdentityError> for CliError {
    fn from(e: IdentityError) -> Self {
        CliError::Internal(e.to_string())
    }
}
