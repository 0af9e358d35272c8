use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("forbidden measurement branch at site {site} (p_click = {p_click:e})")]
    ForbiddenBranch { site: usize, p_click: f64 },

    #[error("state invariant violated: {0}")]
    InvariantViolation(String),

    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParams(msg.into()))
}
