use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("system is underdetermined: {params} parameters but only {rows} observations")]
    Underdetermined { params: usize, rows: usize },

    #[error("matrix is not symmetric positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("window too short: {got} steps, need at least {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("measurement model undefined at zero range")]
    ZeroRange,

    #[error("missing prior estimate for step at t = {0}")]
    MissingPrior(f64),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
