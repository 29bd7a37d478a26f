use thiserror::Error;

/// Errors produced across the library. Each variant maps to a stable CLI
/// exit code, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("not nilpotent: {0}")]
    NotNilpotent(String),

    #[error("ill-separated spectrum: {0}")]
    IllSeparated(String),

    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),

    #[error("tracking failure: {0}")]
    TrackingFailure(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit-code contract: 0 success, 2 input/validation, 3 numerical
    /// failure, 4 assumption violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Parse(_)
            | Error::CapacityExceeded(_)
            | Error::Io(_) => 2,
            Error::Numerical(_)
            | Error::IllSeparated(_)
            | Error::SingularEvaluation(_)
            | Error::TrackingFailure(_)
            | Error::DegenerateFit(_) => 3,
            Error::NotNilpotent(_) | Error::Assumption(_) | Error::Unsupported(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
