use std::path::PathBuf;

use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate evolution at t={t}: gamma={gamma:e} at lattice index {index} (guard {guard:e})")]
    DegenerateEvolution {
        t: f64,
        index: usize,
        gamma: f64,
        guard: f64,
    },

    #[error("CFL violation: dt={dt:e} exceeds limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("realizability violated at lattice index {index}: u={u} < sqrt(1+q^2)={bound}")]
    Realizability { index: usize, u: f64, bound: f64 },

    #[error("non-finite value in {what} at lattice index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("expected a positive value for {what}, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("singular induced metric at lattice index {index}: |det|={det:e}")]
    SingularMetric { index: usize, det: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("no compact support: {0}")]
    Support(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("format error in {path:?} ({field}): {msg}")]
    Format {
        path: PathBuf,
        field: String,
        msg: String,
    },

    #[error("i/o error on {path:?}: {msg}")]
    Io { path: PathBuf, msg: String },
}

impl LabError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Format { .. } => 2,
            LabError::DegenerateEvolution { .. } => 3,
            LabError::CflViolation { .. } | LabError::Realizability { .. } => 4,
            _ => 1,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Config(_) => "ConfigError",
            LabError::DegenerateEvolution { .. } => "DegenerateEvolution",
            LabError::CflViolation { .. } => "CflViolation",
            LabError::Realizability { .. } => "RealizabilityError",
            LabError::NonFinite { .. } => "NonFinite",
            LabError::NonPositive { .. } => "NonPositiveError",
            LabError::SingularMetric { .. } => "SingularMetric",
            LabError::InsufficientSamples { .. } => "InsufficientSamples",
            LabError::Support(_) => "SupportError",
            LabError::GridMismatch(_) => "GridMismatch",
            LabError::Format { .. } => "FormatError",
            LabError::Io { .. } => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
