use thiserror::Error;

/// Errors raised by the estimation, planning, and placement machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numerical failure in {context}: {reason}")]
    Numerical {
        context: &'static str,
        reason: String,
    },

    #[error("no path from {start} to {goal} within {horizon} steps")]
    NoPath {
        start: usize,
        goal: usize,
        horizon: usize,
    },

    #[error("invalid sensor configuration: {0}")]
    Configuration(String),

    #[error("exhaustive search needs {required} evaluations, over the budget of {budget}; use greedy placement")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("belief is in the {actual} phase, expected {expected}")]
    Phase {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(context: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
