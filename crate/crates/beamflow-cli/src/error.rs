//! Error type shared by all subcommands, carrying the process exit code:
//! 0 success, 1 validation error, 2 I/O error, 3 gradient-check failure.

use std::fmt::Display;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, bad input data, or a scenario the model rejects.
    #[error("{0}")]
    Validation(String),
    /// Filesystem trouble: unreadable input, unwritable output.
    #[error("{0}")]
    Io(String),
    /// A gradient check ran to completion and found disagreement.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Check(_) => 3,
        }
    }

    /// I/O error annotated with the path it concerns.
    pub fn io(path: &Path, err: impl Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// Validation error annotated with the file it came from.
    pub fn invalid(path: &Path, err: impl Display) -> Self {
        CliError::Validation(format!("{}: {err}", path.display()))
    }
}

impl From<beamflow_core::ModelError> for CliError {
    fn from(err: beamflow_core::ModelError) -> Self {
        CliError::Validation(err.to_string())
    }
}
