//! Run configuration read from a single TOML file.

use std::path::Path;

use aipdetect_core::rjsmc::RjsmcConfig;
use aipdetect_core::{AemSystem, ForwardOptions, NoiseModel, PriorSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Additive noise given once for every gate or per gate (pT/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdditiveNoise {
    Flat(f64),
    PerGate(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub eps_an: AdditiveNoise,
    /// Multiplicative fraction of the predicted response.
    pub eps_mn: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            eps_an: AdditiveNoise::Flat(1e-3),
            eps_mn: 0.05,
        }
    }
}

impl NoiseSpec {
    pub fn model(&self, n_gates: usize) -> Result<NoiseModel, CliError> {
        let an = match &self.eps_an {
            AdditiveNoise::Flat(x) => vec![*x; n_gates],
            AdditiveNoise::PerGate(v) if v.len() == n_gates => v.clone(),
            AdditiveNoise::PerGate(v) => {
                return Err(CliError::Config(format!(
                    "noise.eps_an has {} values for {n_gates} gates",
                    v.len()
                )))
            }
        };
        NoiseModel::new(an, self.eps_mn).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Artifact options of a single-sounding inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Posterior predictive simulations per sounding.
    pub ppd_draws: usize,
    /// KL divergence (nats) separating informed depths from the prior.
    pub doi_threshold: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            ppd_draws: 200,
            doi_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSpec {
    /// Minimum along-line spacing (m) between inverted soundings; 0 keeps all.
    pub decimation: f64,
}

impl Default for LineSpec {
    fn default() -> Self {
        Self { decimation: 30.0 }
    }
}

/// Synthetic three-layer study: a top layer over a 20 m chargeable layer
/// over a basement, swept over depth, chargeability and basement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    /// Basement conductivities (S/m).
    pub basements: Vec<f64>,
    /// Top layer conductivity (S/m).
    pub top_sigma: f64,
    /// Chargeable layer conductivity (S/m).
    pub layer_sigma: f64,
    pub layer_thickness: f64,
    /// Depths (m) to the top of the chargeable layer.
    pub depths: Vec<f64>,
    pub chargeabilities: Vec<f64>,
    pub tau: f64,
    pub c: f64,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            basements: vec![0.001, 0.01, 0.032, 0.1],
            top_sigma: 0.01,
            layer_sigma: 0.1,
            layer_thickness: 20.0,
            depths: vec![5.0, 20.0, 40.0, 60.0, 80.0, 100.0],
            chargeabilities: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            tau: 4.07e-4,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prior: PriorSpec,
    pub system: AemSystem,
    pub forward: ForwardOptions,
    pub noise: NoiseSpec,
    pub sampler: RjsmcConfig,
    pub output: OutputSpec,
    pub line: LineSpec,
    pub study: StudySpec,
    /// Worker threads; the command line and environment take precedence.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: aipdetect_core::Error| CliError::Config(e.to_string());
        self.prior.validate().map_err(cfg)?;
        self.system.validate().map_err(cfg)?;
        self.sampler.validate().map_err(cfg)?;
        self.noise.model(self.system.gates.len())?;
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if !(self.line.decimation >= 0.0 && self.line.decimation.is_finite()) {
            return Err(CliError::Config("line.decimation must be non-negative".into()));
        }
        if !(self.output.doi_threshold > 0.0) {
            return Err(CliError::Config("output.doi_threshold must be positive".into()));
        }
        let s = &self.study;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !s.basements.iter().all(|&b| positive(b))
            || !positive(s.top_sigma)
            || !positive(s.layer_sigma)
            || !positive(s.layer_thickness)
        {
            return Err(CliError::Config("study conductivities and thickness must be positive".into()));
        }
        if !s.depths.iter().all(|&d| positive(d) && d + s.layer_thickness < self.prior.z_max) {
            return Err(CliError::Config("study depths must lie in (0, z_max - thickness)".into()));
        }
        if !s.chargeabilities.iter().all(|m| (0.0..=1.0).contains(m)) {
            return Err(CliError::Config("study chargeabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.sampler.n_particles = 9600;
        cfg.noise.eps_an = AdditiveNoise::PerGate(vec![2e-3; cfg.system.gates.len()]);
        cfg.workers = Some(4);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("workers = 0").is_err());
        assert!(RunConfig::from_toml("[sampler]\nn_particles = 0").is_err());
        assert!(RunConfig::from_toml("[noise]\neps_an = [1.0, 2.0]").is_err());
        assert!(RunConfig::from_toml("[prior]\nkappa_max = 3\nbogus = 1").is_err());
    }
}
