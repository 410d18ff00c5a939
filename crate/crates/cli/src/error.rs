use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// One invalid config field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {}", list(.0))]
    Config(Vec<Issue>),

    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: spiked_oamp::Error,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", .path.display())]
    Input { path: PathBuf, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The run finished and its outputs were written, but a check failed.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    /// Stable machine-readable class.
    pub fn class(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Engine { .. } => "engine",
            Self::Io { .. } => "io",
            Self::Input { .. } => "input",
            Self::GridMismatch(_) => "grid_mismatch",
            Self::Check(_) => "check_failed",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Input { .. } => 3,
            Self::Engine { .. } => 4,
            Self::GridMismatch(_) => 5,
            Self::Check(_) => 6,
        }
    }

    pub fn engine(context: impl Into<String>) -> impl FnOnce(spiked_oamp::Error) -> Self {
        let context = context.into();
        move |source| Self::Engine { context, source }
    }
}
