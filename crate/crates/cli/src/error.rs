use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("experiment {id}: {source}")]
    Experiment {
        id: String,
        #[source]
        source: wbt_core::Error,
    },
    #[error("results: {0}")]
    Results(String),
    #[error(transparent)]
    Core(#[from] wbt_core::Error),
}

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
