use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unbounded domain needs explicit boundary")]
    NoBoundary,
    #[error("empty domain")]
    EmptyDomain,
    #[error("disconnected domain")]
    Disconnected,
    #[error("refine grid: {0}")]
    RefineGrid(String),
    #[error("{0} implemented for Euclidean gauge only")]
    EuclideanOnly(&'static str),
    #[error("carrot order condition violated, slack {slack:.3e}")]
    ConcatOrder { slack: f64 },
    #[error("no escape in window")]
    NoEscape,
    #[error("increase R_max: {0}")]
    IncreaseRMax(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
