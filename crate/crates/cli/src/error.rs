use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    /// The run finished but did not produce a certified result.
    #[error("{0}")]
    NotCertified(String),
    #[error(transparent)]
    Core(#[from] purcell_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::NotCertified(_) | CliError::Core(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}
