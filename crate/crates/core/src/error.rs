//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown generator kind `{0}`")]
    UnknownGenerator(String),

    #[error("dataset too small: d={d} but num_labels={num_labels} (need d >= num_labels >= 2)")]
    DatasetTooSmall { d: usize, num_labels: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),

    #[error("validation set would be empty")]
    EmptyValidation,

    #[error("fit set would be empty")]
    EmptyFit,

    #[error("test set is empty but the operation requires one")]
    EmptyTest,

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("invalid fold count n={n} for d={d} (need 2 <= n <= d)")]
    InvalidFoldCount { n: usize, d: usize },

    #[error("invalid nested plan (n={n}, k={k}, d={d}): {reason}")]
    InvalidNestedPlan {
        n: usize,
        k: usize,
        d: usize,
        reason: String,
    },

    #[error("nested fold plan has an empty cell after {attempts} re-deals")]
    EmptyNestedCell { attempts: usize },

    #[error("index {index} out of range for dataset of size {d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("index sets overlap: {0}")]
    OverlappingIndices(String),

    #[error("query dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("prototype count {requested} exceeds fit set size {available}")]
    PrototypeCount { requested: usize, available: usize },

    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("negative threshold {0}")]
    NegativeThreshold(f64),

    #[error("learner mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("probabilities must be non-negative and sum to 1 (got sum {0})")]
    ProbabilitiesNotNormalized(f64),

    #[error("error value {0} outside [0, 1]")]
    ErrorValueOutOfRange(f64),

    #[error("list of error samples is empty")]
    EmptyErrorList,

    #[error("PSUTS selection requires a test error on every trial")]
    MissingTestErrors,

    #[error("top-m={m} exceeds trial count n={n}")]
    TopMExceedsTrials { m: usize, n: usize },

    #[error("need at least {need} trials, got {got}")]
    TooFewTrials { need: usize, got: usize },

    #[error("need at least {need} candidates, got {got}")]
    TooFewCandidates { need: usize, got: usize },

    #[error("grid step {0} does not evenly divide 1")]
    InvalidGridStep(f64),

    #[error("search budget exceeded: {cost} > {budget}")]
    BudgetExceeded { cost: u128, budget: u128 },

    #[error("audit requires at least one misconduct-mode family")]
    NoMisconductFamily,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
