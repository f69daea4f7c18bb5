use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing or unreadable files, malformed inputs.
    #[error("{0}")]
    Usage(String),

    /// The computation itself failed.
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<sagan_core::Error> for CliError {
    fn from(e: sagan_core::Error) -> Self {
        use sagan_core::Error as E;
        match e {
            E::Io { .. } | E::Parse { .. } | E::Config(_) | E::Format(_) => CliError::Usage(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
