use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("argument outside the supported domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("convolution grid overflow: t = {t} exceeds grid horizon {horizon}")]
    GridOverflow { t: f64, horizon: f64 },

    #[error("quadrature did not converge: worst subinterval [{a}, {b}] with error estimate {error:e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("network contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("event budget exceeded: {expected:.3e} expected events > budget {budget:.3e}")]
    EventBudget { expected: f64, budget: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
