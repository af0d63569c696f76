use thiserror::Error;

/// CLI failures, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    /// A computed result broke a numerical guarantee; the output is still
    /// written so it can be inspected.
    #[error("numerical contract violated: {0}")]
    Contract(String),

    #[error("{0}")]
    Model(mdpif::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(mdpif::Error::Config(_) | mdpif::Error::Domain(_) | mdpif::Error::OffGrid { .. }) => 2,
            CliError::Contract(_) => 3,
            CliError::Model(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<mdpif::Error> for CliError {
    fn from(e: mdpif::Error) -> Self {
        CliError::Model(e)
    }
}
