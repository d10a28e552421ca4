use std::path::{Path, PathBuf};

use thiserror::Error;
use tiersim::config::ConfigError;
use tiersim::metrics::MetricsError;
use tiersim::study::StudyError;
use tiersim::workload::{TraceError, WorkloadError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Trace { path: PathBuf, source: TraceError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Trace { .. } => "trace",
            CliError::Config(_) => "config",
            CliError::Workload(_) => "workload",
            CliError::Study(_) => "study",
            CliError::Metrics(_) => "metrics",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }
}
