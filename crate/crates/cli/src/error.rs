use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or incomplete configuration; the message names the offending field.
    #[error("{0}")]
    Config(String),
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] sentidrop_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Machine-readable error printed on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub code: String,
    pub module: String,
    pub message: String,
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn report(&self) -> ErrorReport {
        let (code, module) = match self {
            CliError::Config(_) => ("ConfigError", "cli"),
            CliError::MissingArtifacts(_) => ("MissingArtifacts", "cli"),
            CliError::Io { .. } => ("IoError", "cli"),
            CliError::Core(e) => (e.code(), e.module()),
        };
        ErrorReport { code: code.to_string(), module: module.to_string(), message: self.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}
