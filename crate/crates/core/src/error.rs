use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("unknown immunity category `{0}`")]
    UnknownCategory(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("threshold calibration found no crossing in [{lo}, {hi}] (fractions {frac_lo:.3} / {frac_hi:.3})")]
    NoCrossing {
        lo: f64,
        hi: f64,
        frac_lo: f64,
        frac_hi: f64,
    },

    #[error("missing upstream artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("malformed data in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code grouping errors by category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidIntervention(_) | Error::UnknownCategory(_) => 2,
            Error::MissingArtifact(_) => 3,
            Error::Io { .. } | Error::Json(_) | Error::Csv(_) | Error::Parse { .. } => 4,
            Error::Divergence { .. } | Error::NoCrossing { .. } => 5,
            Error::Shape { .. } | Error::SingleClass | Error::Empty(_) => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
