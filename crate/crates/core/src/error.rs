use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the tensor engine, the data pipeline, and training.
#[derive(Debug)]
pub enum Error {
    /// Two operands have incompatible shapes for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A shape or dimension argument is invalid on its own.
    InvalidShape { op: &'static str, detail: String },
    /// A scalar argument is outside its legal range.
    InvalidArgument { what: String },
    /// Backward was requested on a non-scalar tensor.
    NonScalarLoss { shape: Vec<usize> },
    /// Input data violates a contract (NaN fields, bad values).
    Data { what: String },
    /// Timestamps of a trajectory are not non-decreasing.
    TimeOrdering { vessel: String, index: usize },
    /// An object was used before it was initialised (e.g. scaler before fit).
    State { what: String },
    /// A run configuration is unusable (empty split, degenerate region, ...).
    Config { what: String },
    /// A file does not match the expected schema.
    Format { what: String },
    /// A numerical procedure failed (singular system, non-finite values).
    Numerical { what: String },
    Io(std::io::Error),
    Json(serde_json::Error),
    Csv(csv::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            Self::InvalidShape { op, detail } => write!(f, "{op}: {detail}"),
            Self::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
            Self::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Self::Data { what } => write!(f, "data error: {what}"),
            Self::TimeOrdering { vessel, index } => write!(
                f,
                "vessel {vessel}: timestamp at index {index} precedes its predecessor"
            ),
            Self::State { what } => write!(f, "state error: {what}"),
            Self::Config { what } => write!(f, "configuration error: {what}"),
            Self::Format { what } => write!(f, "format error: {what}"),
            Self::Numerical { what } => write!(f, "numerical error: {what}"),
            Self::Io(e) => write!(f, "io error: {e}"),
            Self::Json(e) => write!(f, "json error: {e}"),
            Self::Csv(e) => write!(f, "csv error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            Self::Json(e) => Some(e),
            Self::Csv(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e)
    }
}
