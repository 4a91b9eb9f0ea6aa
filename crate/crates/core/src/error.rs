use thiserror::Error;

/// Failure cases surfaced by the library. Numerical routines return values;
/// errors are reserved for contract violations detectable up front.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("cube does not meet the signal domain")]
    EmptyIntersection,

    #[error("kernel evaluated at coincident points")]
    Singularity,

    #[error("truncation radius {eps} below the grid floor {floor}")]
    TruncationTooFine { eps: f64, floor: f64 },

    #[error("stopping height {lambda} does not exceed the root mean {root_mean}")]
    RootSelected { lambda: f64, root_mean: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
