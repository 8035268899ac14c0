use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing {what} at {}; run the `{stage}` command first", path.display())]
    MissingArtifact {
        what: &'static str,
        stage: &'static str,
        path: PathBuf,
    },
    #[error("{0} evaluation cell(s) had failed utterances")]
    PartialCells(usize),
    #[error(transparent)]
    Core(#[from] advspeech::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(advspeech::Error::Config(_)) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::PartialCells(_) => 5,
            _ => 4,
        }
    }
}
