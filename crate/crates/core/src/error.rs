use std::fmt;

use thiserror::Error;

/// A single violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidParameter {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for InvalidParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn join(errors: &[InvalidParameter]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<InvalidParameter>),

    #[error("mechanical susceptibility is singular at omega = {omega} rad/s (gamma = 0)")]
    SingularSusceptibility { omega: f64 },

    #[error("linear response is singular at omega = {omega} rad/s")]
    SingularAtFrequency { omega: f64 },

    #[error("root finding failed: residual {residual:e} exceeds tolerance {tolerance:e}{}", .detuning.map(|d| format!(" at detuning {d} rad/s")).unwrap_or_default())]
    RootFindingFailed {
        residual: f64,
        tolerance: f64,
        detuning: Option<f64>,
    },

    #[error("detuning must be positive, got {detuning} rad/s")]
    UnsupportedDetuning { detuning: f64 },

    #[error("time step {dt:e} s exceeds stiffness limit {limit:e} s")]
    StiffnessGuard { dt: f64, limit: f64 },

    #[error("simulation diverged at step {step}: |state| = {magnitude:e}")]
    DivergenceGuard { step: usize, magnitude: f64 },

    #[error("trace too short: {segments} segment(s) of length {segment_len}, need at least 4")]
    TooShort { segments: usize, segment_len: usize },

    #[error("expected {expected} peak(s), found {found}")]
    PeaksNotFound { expected: usize, found: usize },

    #[error("fit diverged after {} iteration(s)", .best.n_iter)]
    FitDiverged { best: Box<crate::fitting::FitResult> },

    #[error("fit reached the iteration limit ({})", .best.n_iter)]
    MaxIterations { best: Box<crate::fitting::FitResult> },

    #[error("model evaluation is not finite at the initial point")]
    NonFiniteModel,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for configuration/validation problems, as opposed to numerical or I/O failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Precondition(_) | Error::UnsupportedDetuning { .. } | Error::StiffnessGuard { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Format(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
