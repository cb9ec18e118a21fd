use lexsimp_core::annotations::{RunError, UnknownInstance};
use lexsimp_core::corpus::FreqError;
use lexsimp_core::dataset::DatasetError;
use lexsimp_core::distillation::DistillError;
use lexsimp_core::gateway::GatewayError;
use lexsimp_core::io::IoError;
use lexsimp_core::latency::LatencyError;
use lexsimp_core::prompting::PromptError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, flags or inconsistent inputs.
    #[error("{0}")]
    Validation(String),
    /// The inference backend or the annotation service failed.
    #[error("{0}")]
    Backend(String),
    /// Input data produced diagnostics and strict mode is on.
    #[error("{summary}")]
    Data { summary: String, diagnostics: Vec<String> },
    #[error(transparent)]
    Io(#[from] IoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Io(_) => 1,
            Self::Backend(_) => 2,
            Self::Data { .. } => 3,
        }
    }

    pub fn data(summary: impl Into<String>, diagnostics: Vec<String>) -> Self {
        Self::Data {
            summary: summary.into(),
            diagnostics,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Invalid(d) => {
                let summary = DatasetError::Invalid(d.clone()).to_string();
                Self::data(summary, d.iter().map(ToString::to_string).collect())
            }
            DatasetError::Io(e) => Self::Io(e),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Store(m) => Self::Validation(m),
            other => Self::Backend(other.to_string()),
        }
    }
}

impl From<DistillError> for CliError {
    fn from(e: DistillError) -> Self {
        match e {
            DistillError::Backend { .. } => Self::Backend(e.to_string()),
            DistillError::Io(e) => Self::Io(e),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io(e) => Self::Io(e),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<FreqError> for CliError {
    fn from(e: FreqError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<LatencyError> for CliError {
    fn from(e: LatencyError) -> Self {
        match e {
            LatencyError::Gateway(g) => g.into(),
            LatencyError::Io(e) => Self::Io(e),
            LatencyError::NoTiming => Self::Backend(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<UnknownInstance> for CliError {
    fn from(e: UnknownInstance) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io(e) => Self::Io(e),
            RunError::Dataset(e) => e.into(),
            RunError::UnknownInstance(e) => e.into(),
        }
    }
}

impl From<lexsimp_client::ClientError> for CliError {
    fn from(e: lexsimp_client::ClientError) -> Self {
        match e {
            lexsimp_client::ClientError::BaseUrl(_) => Self::Validation(e.to_string()),
            other => Self::Backend(other.to_string()),
        }
    }
}

impl From<lexsimp_server::ServerError> for CliError {
    fn from(e: lexsimp_server::ServerError) -> Self {
        use lexsimp_server::ServerError as S;
        match e {
            S::Run { source, .. } => source.into(),
            S::Io(e) => Self::Io(e),
            other => Self::Validation(other.to_string()),
        }
    }
}
