use std::fmt::Display;
use std::path::{Path, PathBuf};

use diagramma::annotations::AnnotationError;
use diagramma::classifier::ClassifierError;
use diagramma::corpus::CorpusError;
use diagramma::detect::DetectError;
use diagramma::eg::{FormulaError, GraphError, SemanticsError};
use diagramma::kg::KgError;
use diagramma::vlm::VlmError;
use serde_json::{json, Value};
use thiserror::Error;

/// Everything a subcommand can fail with. Exit code 1 covers usage and
/// domain problems, 2 covers the filesystem and the network.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{}{message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Io { path: Option<PathBuf>, message: String },
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 1,
            CliError::Io { .. } | CliError::Transport(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Invalid(_) => "invalid",
            CliError::Io { .. } => "io",
            CliError::Transport(_) => "transport",
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({"error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string()});
        if let CliError::Io { path: Some(path), .. } = self {
            v["path"] = json!(path.display().to_string());
        }
        v
    }

    pub fn invalid(e: impl Display) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub fn io_error(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: Some(path.to_path_buf()), message: e.to_string() }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } => CliError::Io { path: Some(path), message: source.to_string() },
            CorpusError::Http { .. } => CliError::Transport(e.to_string()),
            other => CliError::invalid(other),
        }
    }
}

impl From<VlmError> for CliError {
    fn from(e: VlmError) -> Self {
        match e {
            VlmError::Transport { .. } | VlmError::Credential { .. } | VlmError::Protocol { .. } => {
                CliError::Transport(e.to_string())
            }
            VlmError::Io(message) => CliError::Io { path: None, message },
            other => CliError::invalid(other),
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::invalid(e)
            }
        })*
    };
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Io(source) => CliError::Io { path: None, message: source.to_string() },
            other => CliError::invalid(other),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Io(source) => CliError::Io { path: None, message: source.to_string() },
            other => CliError::invalid(other),
        }
    }
}

domain_errors!(AnnotationError, FormulaError, GraphError, SemanticsError, KgError);
