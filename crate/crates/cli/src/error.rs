use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed command line.
    #[error("{0}")]
    Usage(String),

    /// Rejected configuration value or key.
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] deepred_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Stable identifier written in the error line.
    pub fn kind(&self) -> &'static str {
        use deepred_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Parse { .. } | E::Csv(_) => "parse",
                E::Config(_) | E::Split(_) => "config",
                E::Checkpoint(_) => "checkpoint",
                E::Diverged { .. } => "diverged",
                E::Io(_) => "io",
                _ => "runtime",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "config" => 2,
            _ => 1,
        }
    }

    /// One-line JSON rendering: `{"error":<kind>,"message":<text>}`.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
