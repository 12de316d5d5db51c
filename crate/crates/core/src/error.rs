use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("window of {size} points exceeds the exact-mode limit of {limit}; use Monte-Carlo mode")]
    ExactLimitExceeded { size: usize, limit: usize },

    #[error("{what} too large: {size} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("invalid shift space: {0}")]
    InvalidShift(String),

    #[error("empty language on window of {0} points (inconsistent transition matrix)")]
    EmptyLanguage(usize),

    #[error("invalid cover: {0}")]
    InvalidCover(String),

    #[error("cover does not cover pattern {pattern:?}")]
    Uncovered { pattern: Vec<u8> },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid sliding block code: {0}")]
    InvalidCode(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("time budget exhausted")]
    BudgetExhausted,
}

impl Error {
    /// Size and time limits, as opposed to invalid input. A series that hits
    /// one keeps the records computed so far.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::ExactLimitExceeded { .. } | Error::TooLarge { .. } | Error::BudgetExhausted
        )
    }
}
