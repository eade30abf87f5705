use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the process exit code the CLI maps them to:
/// configuration problems (2), data problems (3) and numerical problems (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("score does not exist: {0}")]
    NonExistence(String),

    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    #[error("sample too small: need at least {needed} members, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("quadrature failed to converge: estimate {estimate}, error {error} after {subdivisions} subdivisions")]
    OracleFailure {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("threshold too high: exceedance probability {0:e} below 1e-12")]
    ThresholdTooHigh(f64),

    #[error("forecast has no density: {0}")]
    NoDensity(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical Hessian is not positive definite")]
    SingularHessian,

    #[error("no standard error available for parameter `{0}`")]
    MissingStdErr(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("all differences are zero")]
    AllZero,

    #[error("degenerate variance: differences have zero sample variance")]
    DegenerateVariance,

    #[error("insufficient data for station `{station}`: {reason}")]
    InsufficientData { station: String, reason: String },

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate row for station `{station}`, year {year}")]
    DuplicateRow {
        path: String,
        line: usize,
        station: String,
        year: i64,
    },

    #[error("station `{station}`: year {year} missing from covariate file")]
    MissingYear { station: String, year: i64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Parse { .. }
            | Error::DuplicateRow { .. }
            | Error::MissingYear { .. }
            | Error::InsufficientData { .. }
            | Error::ShapeMismatch(_)
            | Error::Io { .. } => 3,
            _ => 4,
        }
    }
}
