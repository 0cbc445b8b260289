use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("weight vector is empty")]
    EmptyWeights,

    #[error("weight p_{index} = {value} must be finite and greater than {margin:e}")]
    InvalidWeight { index: usize, value: f64, margin: f64 },

    #[error("weights sum to {sum}, leaving p_(d+1) = {last} (must exceed {margin:e})")]
    WeightSum { sum: f64, last: f64, margin: f64 },

    #[error("sample size n must be at least 1")]
    ZeroSampleSize,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("point violates the region constraint at axis {axis}")]
    OutsideRegion { axis: usize },

    #[error("point is not strictly inside the simplex (coordinate {coordinate})")]
    NotInterior { coordinate: usize },

    #[error("requires J_i >= 1 for every cell, but J_{index} = {value}")]
    ZeroGap { index: usize, value: i64 },

    #[error("kappa_d = {total} exceeds n = {n}; the event is impossible")]
    ImpossibleEvent { total: u64, n: u64 },

    #[error("N = n - d = {0} is not positive; instance is enumeration-only")]
    NonPositiveN(i64),

    #[error("threshold k_{index} = 0; reduce the thresholds first")]
    UnreducedThresholds { index: usize },

    #[error("Stirling error term is undefined at m = 0")]
    StirlingAtZero,

    #[error("node count {0} outside the supported range 2..=128")]
    NodeCount(usize),

    #[error("cost guard: {what} needs {cost:.3e} evaluations, limit is {limit:.0e}")]
    CostGuard {
        what: &'static str,
        cost: f64,
        limit: f64,
    },

    #[error("{0} replications requested, at least 1000 are required")]
    TooFewReplications(u64),

    #[error("integrand is not finite ({value}) at node {node:?}")]
    NonFinite { value: f64, node: Vec<f64> },

    #[error("report: {0}")]
    Report(String),
}
