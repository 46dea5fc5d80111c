use crate::lie::Tag;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("tag mismatch: expected {expected:?}, found {found:?}")]
    TagMismatch { expected: Tag, found: Tag },
    #[error("matrix is not in group {group} (residual {residual:.3e})")]
    NotInGroup { group: String, residual: f64 },
    #[error("matrix is not in the Lie algebra of {group} (residual {residual:.3e})")]
    NotInAlgebra { group: String, residual: f64 },
    #[error("elements lie over different points of G (residual {residual:.3e})")]
    NotSameFiber { residual: f64 },
    #[error("quotient is not central (residual {residual:.3e})")]
    NotCentralFiber { residual: f64 },
    #[error("local section undefined at this element")]
    SectionUndefined,
    #[error("morphisms are not composable (residual {residual:.3e})")]
    NotComposable { residual: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("point leaves chart {chart}")]
    ChartMismatch { chart: usize },
    #[error("missing field {0}")]
    MissingField(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError { line: usize, column: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("cell subdivision exceeded maximum depth {0}")]
    MaxDepthExceeded(usize),
    #[error("loop does not start and end at the basepoint")]
    NotBased,
    #[error("path is not constant on its collar")]
    NotSitting,
    #[error("boundaries do not match (residual {residual:.3e})")]
    BoundaryMismatch { residual: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("oracle failed: {0}")]
    OracleFailure(String),
    #[error("probe path of length {step:.3e} leaves chart {chart}")]
    StepTooLarge { chart: usize, step: f64 },
    #[error("reconstruction failed: {0}")]
    ReconstructionFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
