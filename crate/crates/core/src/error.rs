//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix pencil is not regular")]
    NotRegular,

    #[error("diffusion state matrix C is not zero")]
    CNotZero,

    #[error("diffusion state matrix C does not equal A")]
    CNotEqualA,

    #[error("transform matrix is numerically singular: {0}")]
    SingularTransform(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("feedback pre-compensation conditions failed: {0:?}")]
    KConditionsFailed(Vec<String>),

    #[error("Riccati solution norm exceeded blow-up cap at t = {t}")]
    GainBlowup { t: f64 },

    #[error("matrix R + D'PD lost positive definiteness at t = {t}")]
    FactorizationFailure { t: f64 },

    #[error("Riccati horizon extension diverged at T = {horizon} (norm {norm:.3e})")]
    Divergence { horizon: f64, norm: f64 },

    #[error("Riccati horizon extension did not converge by T = {max_t} (delta {delta:.3e})")]
    NoConvergence { max_t: f64, delta: f64 },

    #[error("reduced diffusion matrix is rank deficient: rank {rank} < {order}")]
    RankDeficient { rank: usize, order: usize },

    #[error("operation requires a scalar (order-1) reduced system, got order {0}")]
    NotScalar(usize),

    #[error("simulated path magnitude exceeded overflow guard at step {step}")]
    Unstable { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
