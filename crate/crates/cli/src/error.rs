use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<dpident_core::Error> for CliError {
    fn from(e: dpident_core::Error) -> Self {
        use dpident_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Domain(_) | E::Config(_) => CliError::Config(msg),
            E::Data(_) | E::Csv(_) | E::Empty(_) => CliError::Data(msg),
            E::Io(_) | E::Json(_) | E::DimensionMismatch { .. } => CliError::Runtime(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
