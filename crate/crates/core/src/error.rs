use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("negative probability {value} at support index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, which is not within tolerance of 1")]
    ProbabilitySumOutOfTolerance { sum: f64 },
    #[error("population size must be positive")]
    NonPositiveN,
    #[error("support point {0} appears more than once")]
    DuplicatePoint(String),
    #[error("support mixes points with and without an unobserved component")]
    InconsistentSupport,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("point {0} is not in the model support")]
    UnknownPoint(String),
    #[error("treatment probability {value} at index {index} is outside [{lo}, {hi}]")]
    TreatProbOutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid policy class: {0}")]
    InvalidClass(String),
    #[error("reward {0} requires a counterfactual estimator")]
    MissingEstimator(&'static str),
    #[error("weighted reward requires a weight table")]
    MissingWeight,
    #[error("weight {value} at covariate {x_id} is not strictly positive")]
    NonPositiveWeight { x_id: usize, value: f64 },
    #[error("estimator covers {got} covariate values but the model has {expected}")]
    EstimatorSupportGap { expected: usize, got: usize },
    #[error("operation does not support policy class {0}")]
    UnsupportedClass(&'static str),
    #[error("support of size {size} exceeds the enumeration cap of {cap}")]
    SupportTooLarge { size: usize, cap: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("reference puts mass on covariate {x_id} where the agent has none")]
    AbsoluteContinuityViolation { x_id: usize },
    #[error("ranking needs at least two agents, got {0}")]
    InsufficientAgents(usize),
    #[error("agents disagree on the untreated outcome at covariate {x_id}")]
    SharedBaselineMismatch { x_id: usize },
    #[error("covariate {x_id} has zero probability mass")]
    ZeroMassCovariate { x_id: usize },
    #[error("untreated pool is empty at covariate {x_id}")]
    PositivityViolation { x_id: usize },
    #[error("tightness construction needs 0 < beta < alpha (got alpha={alpha}, beta={beta})")]
    ParameterOrderViolation { alpha: f64, beta: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("level {level:?} of feature {feature:?} was not seen at fit time")]
    UnknownLevelAtPredictTime { feature: String, level: String },
    #[error("feature {0:?} is missing from the row")]
    MissingFeature(String),
    #[error("outcome takes a single class; logistic fit needs both")]
    SingleClassTarget,
    #[error("outcome {0} is not in {{-1, +1}}")]
    NonBinaryOutcome(f64),
    #[error("encoded width {got} does not match fitted width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("linear algebra failure: {0}")]
    Numerical(String),
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing outcome indicator column {0:?}")]
    MissingIndicator(String),
    #[error("dataset check failed: {0}")]
    DatasetMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
