use thiserror::Error;

/// Errors produced anywhere in the detection / control / simulation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no points to bin")]
    NoPoints,

    #[error("plane fit failed: {0}")]
    PlaneFitFailed(String),

    #[error("plane has no inliers")]
    NoInliers,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("filter diverged")]
    FilterDiverged,

    #[error("adaptation diverged")]
    AdaptationDiverged,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for key `{key}`: {message}")]
    InvalidValue { key: String, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Shorthand for `ensure!`-style parameter validation.
pub(crate) fn require(cond: bool, name: &'static str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(name, reason))
    }
}
