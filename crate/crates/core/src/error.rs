use thiserror::Error;

/// Errors raised by the inference library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid prior specification: {0}")]
    InvalidPrior(String),

    #[error("invalid system configuration: {0}")]
    InvalidSystem(String),

    #[error("Cole-Cole parameter out of domain: {0}")]
    ColeColeDomain(String),

    #[error("time {t:e} s is outside the transform band [{t_min:e}, {t_max:e}] s")]
    BandCoverage { t: f64, t_min: f64, t_max: f64 },

    #[error("forward model produced a non-finite response at gate {gate}")]
    NonFiniteResponse { gate: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("empty weight set")]
    EmptyWeights,

    #[error("all importance weights underflowed to zero")]
    WeightUnderflow,

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("likelihood failed for {failed} of {total} initial particles")]
    InitializationFailure { failed: usize, total: usize },

    #[error("annealing did not reach gamma = 1 within {0} steps")]
    StepCapExceeded(usize),

    #[error("missing evidence estimate for model ({kappa}, {lambda}) at archived step {step}")]
    MissingEvidence {
        kappa: usize,
        lambda: usize,
        step: usize,
    },

    #[error("non-finite evidence for model ({kappa}, {lambda})")]
    NonFiniteEvidence { kappa: usize, lambda: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
