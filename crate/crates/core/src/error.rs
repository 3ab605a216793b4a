use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("descent quality is undefined for a zero gradient")]
    UndefinedQuality,

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failed validation of a search or experiment configuration. Each variant
/// names the condition that did not hold.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("theta must lie in (0, 1), got {0}")]
    Theta(f64),
    #[error("gamma must be > 1, got {0}")]
    Gamma(f64),
    #[error("initial stepsize must be > 0, got {0}")]
    Delta0(f64),
    #[error("sufficient-decrease constant c must be > 0, got {0}")]
    DecreaseConstant(f64),
    #[error("noise variance must be finite and >= 0, got {0}")]
    NoiseVariance(f64),
    #[error("3 log(gamma) + 11 log(theta) must be > 0, got {0}")]
    StepsizeDrift(f64),
    #[error("budget must be positive")]
    Budget,
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("key `{key}`: {reason}")]
    Value { key: String, reason: String },
}
