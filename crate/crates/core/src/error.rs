//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by parsing, evaluation and the geometric engine.
///
/// The variants split into two broad groups: definition errors (bad input,
/// bad model wiring) and numeric runtime errors (domain violations, escaped
/// trajectories, singular solves). Callers that map errors onto process exit
/// codes can use [`Error::is_definition_error`] to tell them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unknown function '{name}' at offset {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("unbound variable '{0}'")]
    UnboundVariable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown chart '{0}'")]
    UnknownChart(String),

    #[error("no transition from '{from_chart}' to '{to_chart}' covers the point")]
    NoTransition { from_chart: String, to_chart: String },

    #[error("point outside domain of chart '{chart}'")]
    OutsideDomain { chart: String },

    #[error("point outside declared overlap of transition '{from_chart}' -> '{to_chart}'")]
    OutsideOverlap { from_chart: String, to_chart: String },

    #[error("trajectory escaped all chart domains at t = {t}")]
    Escape { t: f64 },

    #[error("fiber coordinate too close to zero: |s| = {0:e}")]
    FiberNearZero(f64),

    #[error("singular symplectic matrix in linear solve")]
    SingularOmega,

    #[error("model error: {0}")]
    Model(String),
}

impl Error {
    /// True for errors that indicate a malformed definition (expression,
    /// chart, model) rather than a numeric failure at run time.
    pub fn is_definition_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnknownFunction { .. }
                | Error::UnknownChart(_)
                | Error::Model(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
