//! Analytic test targets for the samplers.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::Result;
use crate::likelihood::LogLikelihood;
use crate::model::{ModelIndex, ParticleState, PriorSpec};
use crate::rng::StreamRng;
use crate::smc::StaticTarget;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Nested Gaussian problem. One scalar datum `y ~ N(mu, s^2)`; in the
/// half-space model `mu` is the fixed value `mu0`, and with one conductive
/// interface `mu` is the deeper layer's log10 conductivity. Every other
/// parameter is inert, so both evidences are known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedGaussian {
    pub y: f64,
    pub mu0: f64,
    pub s: f64,
}

impl Default for NestedGaussian {
    fn default() -> Self {
        Self { y: 0.5, mu0: 0.0, s: 1.0 }
    }
}

impl NestedGaussian {
    /// Prior with models (0, 0) and (1, 0) only.
    pub fn prior() -> PriorSpec {
        PriorSpec {
            kappa_max: 1,
            lambda_max: 0,
            ..PriorSpec::default()
        }
    }

    fn ln_normal(&self, mu: f64) -> f64 {
        let z = (self.y - mu) / self.s;
        -0.5 * z * z - LN_SQRT_2PI - self.s.ln()
    }

    /// Closed-form log evidence of a model under [`NestedGaussian::prior`].
    pub fn log_evidence(&self, k: ModelIndex) -> f64 {
        let prior = Self::prior();
        if k.kappa == 0 {
            self.ln_normal(self.mu0)
        } else {
            let (a, b) = (prior.phi.low, prior.phi.high);
            let mass = normal_cdf((b - self.y) / self.s) - normal_cdf((a - self.y) / self.s);
            mass.ln() - (b - a).ln()
        }
    }

    /// Bayes factor of the layered model over the half-space.
    pub fn bayes_factor(&self) -> f64 {
        (self.log_evidence(ModelIndex::new(1, 0)) - self.log_evidence(ModelIndex::new(0, 0))).exp()
    }
}

impl LogLikelihood for NestedGaussian {
    fn log_likelihood(&self, state: &ParticleState) -> Result<f64> {
        let mu = state.phi.first().copied().unwrap_or(self.mu0);
        Ok(self.ln_normal(mu))
    }
}

/// Constant likelihood: the posterior equals the prior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlatLikelihood;

impl LogLikelihood for FlatLikelihood {
    fn log_likelihood(&self, _state: &ParticleState) -> Result<f64> {
        Ok(0.0)
    }
}

/// Tempered target for kernel stationarity checks: a Gaussian datum on the
/// background log10 conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundGaussian {
    pub y: f64,
    pub s: f64,
}

impl LogLikelihood for BackgroundGaussian {
    fn log_likelihood(&self, state: &ParticleState) -> Result<f64> {
        let z = (self.y - state.phi_b) / self.s;
        Ok(-0.5 * z * z - LN_SQRT_2PI - self.s.ln())
    }
}

/// Scalar conjugate pair: prior `theta ~ N(0, 1)`, datum `y ~ N(theta, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateGaussian {
    pub y: f64,
}

impl ConjugateGaussian {
    /// `ln N(y; 0, 2)`.
    pub fn log_evidence(&self) -> f64 {
        -0.25 * self.y * self.y - LN_SQRT_2PI - 0.5 * std::f64::consts::LN_2
    }
}

impl StaticTarget for ConjugateGaussian {
    type State = Vec<f64>;

    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
        vec![StandardNormal.sample(rng)]
    }

    fn log_prior(&self, s: &Vec<f64>) -> f64 {
        -0.5 * s[0] * s[0] - LN_SQRT_2PI
    }

    fn log_likelihood(&self, s: &Vec<f64>) -> Result<f64> {
        Ok(-0.5 * (self.y - s[0]).powi(2) - LN_SQRT_2PI)
    }
}
