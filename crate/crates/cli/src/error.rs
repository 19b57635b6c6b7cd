use radscan_core::Error as CoreError;
use radscan_service::ServiceError;
use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or unreadable inputs.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    /// Numeric or model failures while running.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e.root_cause() {
            CoreError::NotFound { .. }
            | CoreError::MalformedLabel { .. }
            | CoreError::UnknownBodyPart { .. }
            | CoreError::Decode { .. }
            | CoreError::Io { .. }
            | CoreError::PretrainedUnavailable { .. }
            | CoreError::Checkpoint(_)
            | CoreError::Csv(_)
            | CoreError::Json(_) => CliError::Input(msg),
            CoreError::Config(_) => CliError::Config(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Core(core) => core.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
