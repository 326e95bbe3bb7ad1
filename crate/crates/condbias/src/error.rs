use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration cannot be executed as specified.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A run reached a state the rule contracts exclude.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A statistic is undefined for the given sample size.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    /// An oracle instance exceeds the enumeration size guard.
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
