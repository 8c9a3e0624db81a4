//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter or configuration value is out of its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Integration step too coarse for the pulse width.
    #[error("step {step} fs is under-resolved for tau_p {tau_p} fs (need step < tau_p/4)")]
    UnderResolved { step: f64, tau_p: f64 },

    /// A delay or amplitude grid is empty or not strictly increasing.
    #[error("invalid grid: {0}")]
    Grid(String),

    /// A trace violates its invariants (ordering, value range, kind).
    #[error("invalid trace: {0}")]
    Trace(String),

    /// The tail-window scale factor cannot be formed.
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    /// The measured trace cannot be fit (preconditions or all-degenerate grid).
    #[error("unfittable trace: {0}")]
    Unfittable(String),

    #[error("{path}: file is empty")]
    EmptyTraceFile { path: String },

    #[error("{path}:{line}: malformed header: expected `delay_fs,counts_per_s` or `delay_fs,rho11[,coherence_v]`, found `{found}`")]
    MalformedHeader {
        path: String,
        line: usize,
        found: String,
    },

    #[error("{path}:{line}: non-numeric field `{field}`")]
    NonNumericField {
        path: String,
        line: usize,
        field: String,
    },

    #[error("{path}:{line}: delays must be strictly increasing")]
    NonIncreasingDelay { path: String, line: usize },

    #[error("{path}:{line}: invalid value: {why}")]
    InvalidValue {
        path: String,
        line: usize,
        why: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
