use std::path::PathBuf;

use sectionrec_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing {what} at {}; run `sectionrec {stage}` first", path.display())]
    Missing {
        stage: &'static str,
        what: &'static str,
        path: PathBuf,
    },

    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::InvalidParameter(_)
            | CoreError::InvalidRatios(_)
            | CoreError::ThresholdOutOfRange(_)
            | CoreError::RankTooLarge { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}
