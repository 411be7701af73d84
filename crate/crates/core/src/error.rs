use std::fmt;

/// Errors produced by the engine, loaders, and training routines.
#[derive(Debug)]
pub enum Error {
    /// Tensor shapes do not conform to an operation's signature.
    ShapeMismatch { op: &'static str, detail: String },
    /// A forward value or backward adjoint contained NaN/Inf.
    NonFinite { op: &'static str, context: String },
    /// An argument violated a precondition (e.g. sigma <= 0).
    InvalidArg(String),
    /// A data file could not be parsed.
    Parse { path: String, detail: String },
    /// Underlying I/O failure.
    Io { path: String, source: std::io::Error },
    /// Iterative solver failed to reach its tolerance.
    NonConvergence { what: String, attained: f64, tolerance: f64 },
    /// Training loss became non-finite; the run was aborted.
    NanAbort { epoch: u32, step: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::NonFinite { op, context } => write!(f, "{op}: non-finite value ({context})"),
            Error::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
            Error::Parse { path, detail } => write!(f, "failed to parse {path}: {detail}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
            Error::NonConvergence { what, attained, tolerance } => write!(
                f,
                "{what} did not converge: attained {attained:e}, tolerance {tolerance:e}"
            ),
            Error::NanAbort { epoch, step } => {
                write!(f, "training aborted: non-finite loss at epoch {epoch}, step {step}")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, detail: impl Into<String>) -> Self {
        Error::Parse { path: path.as_ref().display().to_string(), detail: detail.into() }
    }
}
