//! Diagonal Gaussian likelihood with additive and multiplicative noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ForwardEngine, ResponseVector};
use crate::model::ParticleState;

/// Lowest additive noise level admitted by [`NoiseModel::new`] (pT/s).
pub const EPS_AN_FLOOR: f64 = 1e-3;

/// Per-gate additive noise (pT/s) and a multiplicative fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub eps_an: Vec<f64>,
    pub eps_mn: f64,
}

impl NoiseModel {
    /// Additive levels below [`EPS_AN_FLOOR`] are raised to it.
    pub fn new(eps_an: Vec<f64>, eps_mn: f64) -> Result<Self> {
        if !(eps_mn >= 0.0 && eps_mn.is_finite()) {
            return Err(Error::InvalidNoise(format!("eps_mn = {eps_mn}")));
        }
        if eps_an.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidNoise("eps_an must be finite".into()));
        }
        let eps_an = eps_an.into_iter().map(|e| e.max(EPS_AN_FLOOR)).collect();
        Ok(Self { eps_an, eps_mn })
    }

    /// Same additive level at every gate.
    pub fn flat(n_gates: usize, eps_an: f64, eps_mn: f64) -> Result<Self> {
        Self::new(vec![eps_an; n_gates], eps_mn)
    }

    /// Bypasses the additive floor. Intended for tests and noise-free synthesis.
    pub fn unfloored(eps_an: Vec<f64>, eps_mn: f64) -> Self {
        Self { eps_an, eps_mn }
    }

    pub fn len(&self) -> usize {
        self.eps_an.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_an.is_empty()
    }
}

/// One observed sounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sounding {
    /// Observed per-gate -dB/dt (pT/s).
    pub y: Vec<f64>,
    /// Easting, northing, elevation (m).
    pub location: [f64; 3],
    pub line_id: String,
    pub fiducial: f64,
}

impl Sounding {
    pub fn new(y: Vec<f64>) -> Self {
        Self {
            y,
            location: [0.0; 3],
            line_id: String::new(),
            fiducial: 0.0,
        }
    }
}

/// Diagonal of the data covariance: `eps_an^2 + (eps_mn * y_theta)^2`.
pub fn noise_variance(y_theta: &ResponseVector, noise: &NoiseModel) -> Result<Vec<f64>> {
    if y_theta.values.len() != noise.len() {
        return Err(Error::LengthMismatch {
            expected: noise.len(),
            got: y_theta.values.len(),
        });
    }
    Ok(y_theta
        .values
        .iter()
        .zip(&noise.eps_an)
        .map(|(&y, &a)| a * a + (noise.eps_mn * y).powi(2))
        .collect())
}

/// Gaussian log density of the observation, with the covariance evaluated at
/// the prediction (so the normalising term depends on the prediction).
pub fn log_likelihood(y: &Sounding, y_theta: &ResponseVector, noise: &NoiseModel) -> Result<f64> {
    if y.y.len() != y_theta.values.len() {
        return Err(Error::LengthMismatch {
            expected: y_theta.values.len(),
            got: y.y.len(),
        });
    }
    let var = noise_variance(y_theta, noise)?;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(-0.5
        * y.y
            .iter()
            .zip(&y_theta.values)
            .zip(&var)
            .map(|((&o, &p), &v)| (o - p).powi(2) / v + ln_2pi + v.ln())
            .sum::<f64>())
}

/// Synthetic sounding: forward response plus noise drawn from the noise model.
pub fn simulate_sounding<R: Rng + ?Sized>(
    state: &ParticleState,
    engine: &ForwardEngine,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Sounding> {
    let clean = engine.response(state)?;
    add_noise(&clean, noise, rng)
}

/// Noisy realisation of a predicted response.
pub fn add_noise<R: Rng + ?Sized>(
    clean: &ResponseVector,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Sounding> {
    let var = noise_variance(clean, noise)?;
    let y = clean
        .values
        .iter()
        .zip(&var)
        .map(|(&p, &v)| {
            let z: f64 = rng.sample(StandardNormal);
            p + v.sqrt() * z
        })
        .collect();
    Ok(Sounding::new(y))
}

/// Log-likelihood of a particle state, as consumed by the samplers.
pub trait LogLikelihood: Sync {
    fn log_likelihood(&self, state: &ParticleState) -> Result<f64>;
}

/// Likelihood of one AEM sounding.
#[derive(Debug, Clone)]
pub struct AemLikelihood {
    pub engine: ForwardEngine,
    pub data: Sounding,
    pub noise: NoiseModel,
}

impl AemLikelihood {
    pub fn new(engine: ForwardEngine, data: Sounding, noise: NoiseModel) -> Result<Self> {
        let n = engine.system().gates.len();
        if data.y.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: data.y.len() });
        }
        if noise.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: noise.len() });
        }
        if data.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sounding contains non-finite values".into()));
        }
        Ok(Self { engine, data, noise })
    }
}

impl LogLikelihood for AemLikelihood {
    fn log_likelihood(&self, state: &ParticleState) -> Result<f64> {
        let pred = self.engine.response(state)?;
        log_likelihood(&self.data, &pred, &self.noise)
    }
}
