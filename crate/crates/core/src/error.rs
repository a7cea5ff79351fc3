use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distribution has no atoms")]
    EmptyDistribution,
    #[error("negative or non-finite probability {prob} at offset {offset}")]
    InvalidProbability { offset: i64, prob: f64 },
    #[error("probabilities sum to {sum}, expected 1 within 1e-9")]
    UnnormalizedDistribution { sum: f64 },
    #[error("span undefined for a single-atom distribution at offset {0}")]
    DegenerateSpan(i64),
    #[error("invalid environment law: {0}")]
    InvalidLaw(String),
    #[error("invalid oracle instance: {0}")]
    InvalidInstance(String),
    #[error("state space of {count} states exceeds budget of {budget}")]
    StateBudgetExceeded { count: u128, budget: u64 },
    #[error("linear solve failed: {0}")]
    SingularSystem(String),
    #[error("{0} replicas did not exit within the step horizon")]
    Undecided(u64),
    #[error("assumption check failed: {0}")]
    AssumptionFailure(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
