use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate category name `{0}`")]
    DuplicateName(String),

    #[error("bottom category `{name}` references unknown parent `{parent}`")]
    Orphan { name: String, parent: String },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("not a probability vector: {0}")]
    Normalization(String),

    #[error("counts are all zero")]
    EmptyCounts,

    #[error("event mode mismatch: {0}")]
    ModeMismatch(&'static str),

    #[error("uncertainty class is infeasible or uninitialized")]
    InfeasibleClass,

    #[error("time budget of {budget_ms} ms exceeded")]
    BudgetExceeded { budget_ms: u128 },

    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error("support violation: p[{index}] > 0 but q[{index}] = 0")]
    SupportViolation { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
