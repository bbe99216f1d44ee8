use ofinr_core::flow::FlowError;
use ofinr_core::metrics::MetricsError;
use ofinr_core::optim::TrainError;
use ofinr_core::siren::{CheckpointError, ModelError};
use ofinr_core::video::VideoError;
use thiserror::Error;

/// Command failure, classified by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments or inconsistent inputs (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Training diverged (exit 3).
    #[error("{0}")]
    Numerical(String),
    /// Missing, unreadable or unwritable files (exit 4).
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<VideoError> for CliError {
    fn from(e: VideoError) -> Self {
        match e {
            VideoError::Io { .. } | VideoError::Unreadable { .. } | VideoError::Empty(_) => CliError::Io(e.to_string()),
            VideoError::Gap(_) | VideoError::DuplicateIndex(_) => CliError::Io(format!("frame sequence: {e}")),
            VideoError::Flow(f) => f.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Io { .. } | FlowError::BadMagic(_) | FlowError::Truncated { .. } | FlowError::BadDimensions { .. } => {
                CliError::Io(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::ShapeMismatch { .. } => CliError::Usage(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NumericalAbort { .. } | TrainError::NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            TrainError::Io { .. } | TrainError::Csv(_) => CliError::Io(e.to_string()),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Video(v) => v.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}
