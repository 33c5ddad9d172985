//! Runner errors mapped onto process exit codes.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, LabError>;

/// Experiment-runner failure classes.
///
/// Exit codes: 0 success, 1 config error, 2 runtime/numerical failure,
/// 3 integrity failure.
#[derive(Debug)]
pub enum LabError {
    /// Bad CLI usage, unparsable or invalid configuration.
    Config(String),
    /// Training or evaluation failed at runtime.
    Runtime(String),
    /// An artifact exists but fails its checksum or provenance check.
    Integrity { path: PathBuf, reason: String },
    /// Filesystem trouble.
    Io { path: PathBuf, source: std::io::Error },
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 1,
            LabError::Runtime(_) | LabError::Io { .. } => 2,
            LabError::Integrity { .. } => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> LabError {
        LabError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> LabError {
        LabError::Runtime(msg.into())
    }

    pub fn integrity(path: impl Into<PathBuf>, reason: impl Into<String>) -> LabError {
        LabError::Integrity { path: path.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> LabError {
        LabError::Io { path: path.into(), source }
    }
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Config(msg) => write!(f, "config error: {msg}"),
            LabError::Runtime(msg) => write!(f, "runtime error: {msg}"),
            LabError::Integrity { path, reason } => {
                write!(f, "integrity error: {}: {reason}", path.display())
            }
            LabError::Io { path, source } => write!(f, "io error: {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for LabError {}

impl From<pct_core::Error> for LabError {
    fn from(e: pct_core::Error) -> Self {
        LabError::Runtime(e.to_string())
    }
}
