//! Adaptive reversible-jump sequential Monte Carlo for detecting induced
//! polarisation in airborne time-domain EM soundings.

pub mod detect;
pub mod error;
pub mod forward;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod rjsmc;
pub mod rng;
pub mod smc;
pub mod toy;

pub use error::{Error, Result};
pub use forward::{forward, AemSystem, ForwardEngine, ForwardOptions, Gate, ResponseVector, Waveform};
pub use model::{
    log_prior_density, merge_profiles, sample_prior, EarthProfile, ModelIndex, ParticleState,
    PriorSpec, Profile,
};
pub use likelihood::{
    log_likelihood, noise_variance, simulate_sounding, AemLikelihood, LogLikelihood, NoiseModel,
    Sounding,
};
pub use rjsmc::{run_rjsmc, ModelEvidence, Particle, RjsmcConfig, RjsmcOutput};
