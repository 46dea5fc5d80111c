use holotwist_core::Error;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("{context}: {source}")]
    Domain { context: String, source: Error },
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> CliError {
        CliError::Config { path: path.into(), message: message.into() }
    }

    /// Errors caused by a bad selection in the config (a loop on the wrong
    /// model, an unparsable expression) become config errors at `path`;
    /// everything else is a domain failure.
    pub fn at(path: &str, context: &str, e: Error) -> CliError {
        match e {
            Error::Config(_)
            | Error::UnknownIdentifier(_)
            | Error::SyntaxError { .. }
            | Error::Shape(_)
            | Error::NotBased
            | Error::NotSitting
            | Error::BoundaryMismatch { .. }
            | Error::PreconditionViolated(_) => CliError::Config { path: path.into(), message: e.to_string() },
            e => CliError::Domain { context: context.into(), source: e },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain { .. } => 1,
            _ => 2,
        }
    }

    pub fn info(&self) -> ErrorInfo {
        let (kind, variant, path) = match self {
            CliError::Config { path, .. } => ("config", "config".to_string(), Some(path.clone())),
            CliError::Io { path, .. } => ("io", "io".to_string(), Some(path.clone())),
            CliError::Domain { source, .. } => ("domain", variant_name(source).to_string(), None),
        };
        ErrorInfo { kind: kind.into(), variant, path, message: self.to_string() }
    }
}

/// Machine-readable rendering of a failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

pub fn variant_name(e: &Error) -> &'static str {
    match e {
        Error::TagMismatch { .. } => "tag-mismatch",
        Error::NotInGroup { .. } => "not-in-group",
        Error::NotInAlgebra { .. } => "not-in-algebra",
        Error::NotSameFiber { .. } => "not-same-fiber",
        Error::NotCentralFiber { .. } => "not-central-fiber",
        Error::SectionUndefined => "section-undefined",
        Error::NotComposable { .. } => "not-composable",
        Error::Shape(_) => "shape",
        Error::ChartMismatch { .. } => "chart-mismatch",
        Error::MissingField(_) => "missing-field",
        Error::SyntaxError { .. } => "syntax-error",
        Error::UnknownIdentifier(_) => "unknown-identifier",
        Error::DomainError(_) => "domain-error",
        Error::MaxDepthExceeded(_) => "max-depth-exceeded",
        Error::NotBased => "not-based",
        Error::NotSitting => "not-sitting",
        Error::BoundaryMismatch { .. } => "boundary-mismatch",
        Error::PreconditionViolated(_) => "precondition-violated",
        Error::OracleFailure(_) => "oracle-failure",
        Error::StepTooLarge { .. } => "step-too-large",
        Error::ReconstructionFailed(_) => "reconstruction-failed",
        Error::Config(_) => "config",
    }
}
