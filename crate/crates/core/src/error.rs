use thiserror::Error;

use crate::ast::{Name, Value};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unbound function `{0}`")]
    UnboundFunction(Name),
    #[error("function `{func}` is not defined on {arg}")]
    TypeMismatch { func: String, arg: Value },
    #[error("free variable `{0}` in an expression that must be closed")]
    FreeVariable(Name),
    #[error("value {value} does not match pattern {pattern}")]
    PatternMismatch { pattern: String, value: Value },
    #[error("no equation for process constant `{0}`")]
    UndefinedConstant(Name),
    #[error("evaluation did not reach a fixed point within {0} steps")]
    NonTermination(usize),
    #[error("configuration is not fully evaluated: {0}")]
    NotFullyEvaluated(String),
    #[error("component has no standard-form shape: {0}")]
    NotReachableShape(String),
    #[error("trusted immortal is already set")]
    TiAlreadySet,
    #[error("trusted immortal is not set")]
    TiUnset,
    #[error("invalid representative: {0}")]
    InvalidRepresentative(String),
    #[error("representative invariant violated: {0}")]
    InvariantViolation(String),
    #[error("knowledge vector has no known entry")]
    EmptyKnowledge,
    #[error("input on unrestricted channel {0} cannot be enumerated")]
    OpenInput(String),
    #[error("explored graph is truncated at {0} states")]
    GraphTruncated(usize),
    #[error("step `{step}` is not enabled; enabled: [{}]", enabled.join(", "))]
    StepNotEnabled { step: String, enabled: Vec<String> },
    #[error("invalid configuration: {0}")]
    Config(String),
}
