use std::fmt;
use std::path::Path;

use levelsmith_core::corpusgen::CorpusError;
use levelsmith_core::experiments::ExperimentError;
use levelsmith_core::ganmodels::GanError;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_NON_FINITE: i32 = 4;
pub const EXIT_MISSING: i32 = 5;
pub const EXIT_LABEL_REQUIRED: i32 = 6;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError::new(EXIT_VALIDATION, message)
    }

    pub fn missing(path: &Path) -> Self {
        CliError::new(EXIT_MISSING, format!("not found: {}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::GenerationTimeout { .. } | CorpusError::MutationFailed { .. } => {
                EXIT_TIMEOUT
            }
            CorpusError::Io(_) => EXIT_FAILURE,
            _ => EXIT_VALIDATION,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        let code = match e {
            GanError::NonFiniteLoss { .. } | GanError::NonFinite(_) => EXIT_NON_FINITE,
            GanError::LabelRequired => EXIT_LABEL_REQUIRED,
            GanError::InvalidConfig(_)
            | GanError::PartitionMismatch(_)
            | GanError::UnexpectedLabel => EXIT_VALIDATION,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Corpus(c) => c.into(),
            ExperimentError::InvalidPlan(_) => CliError::validation(e.to_string()),
            other => CliError::new(EXIT_FAILURE, other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_FAILURE, e.to_string())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::new(EXIT_FAILURE, format!("{e:#}"))
    }
}
