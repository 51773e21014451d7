use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("sample counts differ: {0} vs {1}")]
    SampleCountMismatch(usize, usize),

    #[error("dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("exact regime exceeded: n = {n} > n_max = {n_max}; subsample before calling")]
    ExactRegimeExceeded { n: usize, n_max: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("explosion cap: generation {generation} pushes the tree past {cap} nodes")]
    ExplosionCap { generation: usize, cap: usize },

    #[error("level {requested} exceeds tree depth {depth}")]
    DepthExceeded { requested: usize, depth: usize },

    #[error("negative weight at generation {0}; the homogeneous process needs nonnegative weights")]
    NegativeWeight(usize),

    #[error("contraction required: rho = {0} must be < 1")]
    ContractionRequired(f64),

    #[error("moment unavailable: {0}")]
    MomentUnavailable(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("invalid degree sequence: {0}")]
    InvalidDegrees(String),

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
