use thiserror::Error;

/// Command failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or input files; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure while running an otherwise valid command; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<wrcp_core::Error> for CliError {
    fn from(e: wrcp_core::Error) -> Self {
        use wrcp_core::Error as E;
        match e {
            E::Domain(_)
            | E::Refused(_)
            | E::InsufficientData { .. }
            | E::Parse { .. }
            | E::Checkpoint(_)
            | E::DegenerateInput(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
