use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: timestamp {t} does not follow {prev}")]
    Ordering { line: usize, t: f64, prev: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("gap of {:.3} s between t={from} and t={to} exceeds {max} s", to - from)]
    Gap { from: f64, to: f64, max: f64 },

    #[error("missing {channel} data at t={t}")]
    MissingChannel { channel: &'static str, t: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("time went backwards: {t} after {prev}")]
    Monotonicity { t: f64, prev: f64 },

    #[error("session integrity: {0}")]
    Integrity(String),

    #[error("at t={t}: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("startup failed: {0}")]
    Startup(String),
}

impl Error {
    pub(crate) fn at(self, t: f64) -> Error {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime { t, source: Box::new(e) },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}
