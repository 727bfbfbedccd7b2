use thiserror::Error;

use crate::jet::JetError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("resolution exceeded: {0}")]
    ResolutionExceeded(String),
    #[error("input is constant; the inequality is trivial")]
    ConstantInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("finite-difference step too small: {0}")]
    StepTooSmall(String),
    #[error("step failed after {retries} retries at t = {t} (dt = {dt})")]
    StepFailure { retries: usize, t: f64, dt: f64 },
    #[error("curve is not critical: gradient norm {grad_norm:e} exceeds {limit:e}")]
    NotCritical { grad_norm: f64, limit: f64 },
    #[error("curve leaves the tubular neighborhood: {0}")]
    OutOfTubularNeighborhood(String),
    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
