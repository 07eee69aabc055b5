use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown model entry `{0}`")]
    UnknownEntry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires the {expected} regime")]
    RegimeMismatch { expected: &'static str },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("simulation needs {required} steps, above the limit of {limit}")]
    TooManySteps { required: u64, limit: u64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("diffusion coefficient {value:e} at x = {x} is below the floor")]
    DegenerateDiffusion { x: f64, value: f64 },

    #[error("degenerate information matrix (A = {0:e})")]
    Degenerate(f64),

    #[error("density is not integrable: {0}")]
    NotIntegrable(String),

    #[error("missing potential for the modified likelihood")]
    MissingPotential,

    #[error("potential is not 1-periodic (p(0) = {p0}, p(1) = {p1})")]
    NotPeriodic { p0: f64, p1: f64 },

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownEntry(_)
            | Error::InvalidParameter { .. }
            | Error::RegimeMismatch { .. }
            | Error::Unsupported(_)
            | Error::MissingPotential
            | Error::NotPeriodic { .. }
            | Error::TooManySteps { .. }
            | Error::Config(_) => 2,
            Error::Replicate { source, .. } => source.exit_code(),
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
