use thiserror::Error;

/// Errors produced by the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("non-finite value in {0}")]
    NumericInput(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("path count {found} exceeds cap {cap}")]
    TooManyPaths { found: u128, cap: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("degenerate normalization at node {node}")]
    DegenerateNormalization { node: usize },
    #[error("epsilon {0} outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("margin {0} is not positive")]
    MarginDegenerate(f64),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("infeasible rescaling: {0}")]
    InfeasibleRescaling(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{points} points is too many to materialize")]
    TooManyPoints { points: u128 },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
