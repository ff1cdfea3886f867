use thiserror::Error;

/// Errors produced anywhere in the ranking, learning, data and evaluation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RsmError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("not a distribution: {0}")]
    NotDistribution(String),

    #[error("chain has no unique stationary distribution (was the restart mixed in?)")]
    NoUniqueStationary,

    #[error("I - (P - P_inf) is singular: {0}")]
    SingularFundamental(String),

    #[error("context has {0} item(s); at least 2 are required")]
    ContextTooSmall(usize),

    #[error("item {0} has no outgoing mass after restriction")]
    DanglingItem(String),

    #[error("unknown item id {0}")]
    UnknownItem(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid of {required} candidates exceeds the budget of {cap}")]
    GridBudgetExceeded { required: u128, cap: u128 },

    #[error("quadratic subproblem failed: {0}")]
    Subproblem(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("need at least 2 flip pairs to split, got {0}")]
    SplitTooSmall(usize),

    #[error("paired differences are constant and nonzero; t statistic undefined")]
    DegenerateVariance,

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl RsmError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        RsmError::Shape(msg.into())
    }

    /// True for failures caused by input data (schema, parsing, empty or too-small sets).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            RsmError::Schema(_)
                | RsmError::Parse { .. }
                | RsmError::EmptyDataset
                | RsmError::SplitTooSmall(_)
                | RsmError::UnknownItem(_)
                | RsmError::Io(_)
        )
    }

    /// True for configuration mistakes.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            RsmError::InvalidConfig(_) | RsmError::InvalidWeights(_) | RsmError::GridBudgetExceeded { .. }
        )
    }
}

impl From<std::io::Error> for RsmError {
    fn from(e: std::io::Error) -> Self {
        RsmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RsmError>;
