use thiserror::Error;

use crate::concept::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown environment {0}")]
    UnknownEnvironment(usize),

    #[error("goal unreachable in environment {0}")]
    GoalUnreachable(usize),

    #[error("state {state} is not reachable in environment {env_id}")]
    StateAbsent { env_id: usize, state: String },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("degenerate query: the {0} side is empty")]
    DegenerateQuery(Side),

    #[error("degenerate prior: the {0} side has zero mass")]
    DegeneratePrior(Side),

    #[error("no environment pairs given for {0:?}")]
    EmptyPairs(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("every candidate environment is excluded")]
    Exhausted,

    #[error("estimated and observed environments have identical embeddings")]
    NoDifference,

    #[error("no language vectors to explain with")]
    NoLanguageVectors,

    #[error("t statistic undefined: differences have zero variance")]
    UndefinedT,

    #[error("statistics error: {0}")]
    Stats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
