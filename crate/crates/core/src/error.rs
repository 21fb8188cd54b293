use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PepError {
    #[error("unknown space {0}")]
    UnknownSpace(String),
    #[error("duplicate space name `{0}`")]
    DuplicateSpace(String),
    #[error("space mismatch: `{left}` vs `{right}`")]
    SpaceMismatch { left: String, right: String },
    #[error("LMI block is not square: row {row} has {len} entries, expected {expected}")]
    NonSquareLmi {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("LMI block is not symmetric at ({0}, {1})")]
    AsymmetricLmi(usize, usize),
    #[error("invalid class parameters: {0}")]
    InvalidClass(String),
    #[error("invalid method parameters: {0}")]
    InvalidMethod(String),
    #[error("criterion {criterion} is not available for this trajectory: {reason}")]
    IncompatibleCriterion { criterion: String, reason: String },
    #[error("expression references undeclared {0}")]
    DanglingReference(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("solve did not reach optimality (status {0})")]
    NotOptimal(String),
    #[error("dual certificate not available: {0}")]
    NoDual(String),
    #[error("matrix is significantly indefinite (min eigenvalue {min_eig:e}, trace {trace:e})")]
    Indefinite { min_eig: f64, trace: f64 },
    #[error("norm completion failed: t* = {t_star} exceeds bound {bound}")]
    CompletionFailed { t_star: f64, bound: f64 },
    #[error("reconstruction residual check failed: {what} = {value:e}")]
    ResidualCheck { what: String, value: f64 },
    #[error("root finding failed: {0}")]
    RootNotFound(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, PepError>;
