use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid initial datum: {0}")]
    InvalidInitialDatum(String),

    /// A solver or evaluator produced a non-finite value or failed to converge.
    /// `time` carries the last good time of a trajectory when one exists.
    #[error("numerical failure in {what}{}", .time.map(|t| format!(" (last good time {t})")).unwrap_or_default())]
    NumericalFailure { what: String, time: Option<f64> },
}

impl Error {
    pub fn numerical(what: impl Into<String>) -> Self {
        Error::NumericalFailure {
            what: what.into(),
            time: None,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfiguration(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
