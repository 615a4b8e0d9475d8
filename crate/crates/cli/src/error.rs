use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] evsr::Error),

    #[error("{path}:{line}: {reason}")]
    Line {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("gradient check failed for {0} of {1} instances")]
    GradCheck(usize, usize),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn line(path: &std::path::Path, line: usize, reason: impl Into<String>) -> Self {
        CliError::Line {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    /// 3 for numerical failures, 2 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::GradCheck(..) => 3,
            _ => 2,
        }
    }
}
