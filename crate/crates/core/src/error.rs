use thiserror::Error;

/// Errors produced by the spectral pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coordinate {x} outside segment [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("root search failed: no sign change bracketed up to w in [{lo}, {hi}]")]
    Search { lo: f64, hi: f64 },

    #[error("series did not converge after {terms} terms (tail bound {tail:e})")]
    Series { terms: usize, tail: f64 },

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("lambda = {lambda} is outside the neighbourhood |lambda - lambda_s| < {radius}")]
    Domain { lambda: f64, radius: f64 },

    #[error("unknown root index {0}")]
    UnknownIndex(usize),

    #[error("contour gamma_{l} passes through (or too close to) a zero; suggested l: {suggested:?}")]
    ContourThroughZero { l: usize, suggested: Option<usize> },

    #[error("contour winding did not stabilise after {nodes} nodes per side")]
    ContourUnstable { nodes: usize },

    #[error("CERTIFICATE VIOLATION at s = {s}: {detail}")]
    CertificateViolation { s: usize, detail: String },

    #[error("numerical failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
