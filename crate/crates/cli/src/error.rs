use thiserror::Error;

/// Failures of a scenario run, mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("output error: {0}")]
    Output(String),

    #[error("task error: {0}")]
    Task(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Output(_) => 3,
            CliError::Task(_) => 4,
        }
    }
}

impl From<qnlchain_core::Error> for CliError {
    fn from(e: qnlchain_core::Error) -> Self {
        CliError::Task(e.to_string())
    }
}
