//! Error types shared across the crate.

use thiserror::Error;

use crate::value::{AttributeId, ValueTag};

#[derive(Debug, Error)]
pub enum ValueError {
    #[error("unknown attribute type {0:?}")]
    UnknownType(String),
    #[error("cell {cell:?} does not parse as {tag}")]
    BadCell { cell: String, tag: ValueTag },
    #[error("data set {dataset:?} has no position {pos}")]
    NoSuchPosition { dataset: String, pos: usize },
    #[error("record arity {got} does not match layout arity {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("data sets have different layouts")]
    LayoutMismatch,
    #[error("attribute {0} is not in the layout")]
    AttributeNotInLayout(AttributeId),
    #[error("unknown attribute name {0:?}")]
    UnknownAttribute(String),
    #[error("attribute name {0:?} is ambiguous; qualify it as dataset.name")]
    AmbiguousAttribute(String),
}

/// Errors raised while parsing a UDF source file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: field index must be an integer literal or a single-assignment constant variable")]
    NonLiteralIndex { line: usize },
    #[error("line {line}: jump to undefined label {label}")]
    DanglingLabel { line: usize, label: u32 },
    #[error("line {line}: duplicate label {label}")]
    DuplicateLabel { line: usize, label: u32 },
    #[error("program is empty")]
    Empty,
    #[error("line {line}: expected header as first instruction")]
    MissingHeader { line: usize },
}

/// Errors raised by a single UDF invocation.
#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("label {label}: getField position {pos} is out of range for arity {arity}")]
    FieldOutOfRange { label: u32, pos: usize, arity: usize },
    #[error("label {label}: type error: {msg}")]
    Type { label: u32, msg: String },
    #[error("label {label}: division by zero")]
    DivisionByZero { label: u32 },
    #[error("label {label}: use of unbound variable {var}")]
    Unbound { label: u32, var: String },
    #[error("step budget of {0} exceeded")]
    StepBudget(u64),
    #[error("label {label}: {msg}")]
    Invalid { label: u32, msg: String },
}

/// Errors raised by static UDF analysis.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScaError {
    #[error("udf {name} declares {params} inputs but {given} arities were given")]
    InputCount { name: String, params: usize, given: usize },
}

/// Errors raised while loading or validating a flow description.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("flow document: {0}")]
    Document(String),
    #[error("udf {path}: {source}")]
    Udf {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("csv {path}: {msg}")]
    Csv { path: String, msg: String },
    #[error("operator {op}: {msg}")]
    Operator { op: String, msg: String },
}

/// Errors raised during plan enumeration.
#[derive(Debug, Error)]
pub enum EnumError {
    /// The plan budget was exhausted; carries the number of distinct
    /// alternatives found before giving up.
    #[error("enumeration budget exceeded after {found} alternatives")]
    Budget { found: usize },
}

/// Errors raised while executing a plan.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("operator {op}: {source}")]
    Udf {
        op: String,
        #[source]
        source: ExecError,
    },
    #[error("operator {op}: {msg}")]
    Operator { op: String, msg: String },
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Umbrella error for callers that mix phases.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
