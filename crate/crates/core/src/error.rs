use thiserror::Error;

use crate::ensemble::Trajectory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("axis {axis} out of range for a {dims}-dimensional grid")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dt exceeds spectral stability bound: dt * E_max / hbar = {phase:.4} >= 2π")]
    StabilityBound { phase: f64 },

    #[error("time mismatch: {0}")]
    TimeMismatch(String),

    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure {
        time: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("wave packets are not disjoint: overlap {overlap:.3e} between packets {a} and {b}")]
    PacketsNotDisjoint { a: usize, b: usize, overlap: f64 },

    #[error("density leaked to the domain boundary: edge/peak = {ratio:.3e}")]
    BoundaryLeak { ratio: f64 },

    #[error("composite grid of {points} points exceeds the memory budget of {budget} points")]
    MemoryBudget { points: usize, budget: usize },

    #[error("projector family invalid: {0}")]
    Projectors(String),

    #[error("input not normalized: {0}")]
    NotNormalized(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}
