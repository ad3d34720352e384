use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid service-class count {0}: only 3 or 6 are published")]
    InvalidScCount(u32),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lattice risk-neutral probability {prob} outside [0, 1]; use more steps")]
    LatticeProbability { prob: f64 },

    #[error("critical-price solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no usable history for kernel regression")]
    ColdStart,

    #[error("deficit already recorded for OS {os_id} on day {day}")]
    DuplicateDeficit { os_id: String, day: u32 },

    #[error("unknown plan `{0}`")]
    UnknownPlan(String),

    #[error("state desync for OS {os_id}: expected day {expected}, got {got}")]
    DaySkew { os_id: String, expected: u32, got: u32 },

    #[error("trace set invalid: {0}")]
    Trace(String),

    #[error("missing plan 1 results for {0}-SC table")]
    MissingBaseline(u32),

    #[error("config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
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

    /// Stable machine-readable tag used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScCount(_) => "invalid_sc_count",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::LatticeProbability { .. } => "lattice_probability",
            Error::NoConvergence { .. } => "no_convergence",
            Error::ColdStart => "cold_start",
            Error::DuplicateDeficit { .. } => "duplicate_deficit",
            Error::UnknownPlan(_) => "unknown_plan",
            Error::DaySkew { .. } => "day_skew",
            Error::Trace(_) => "trace",
            Error::MissingBaseline(_) => "missing_baseline",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
