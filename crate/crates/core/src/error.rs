use thiserror::Error;

/// Errors raised by the kernel, games, dynamics and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("non-differentiable point: {0}")]
    NonDifferentiable(String),
    #[error("unsupported game: {0}")]
    UnsupportedGame(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("stability violation: {0}")]
    StabilityViolation(String),
    #[error("unbounded iteration count: {0}")]
    UnboundedIterations(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("i/o error: {0}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
