//! Model-selection statistics and posterior summaries of a final cloud.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ForwardEngine;
use crate::likelihood::{add_noise, NoiseModel, Sounding, EPS_AN_FLOOR};
use crate::model::{ModelIndex, ParticleState, PriorSpec, Profile};

/// Histogram bins spanning each property's prior range.
pub const DEPTH_GRID_BINS: usize = 64;
/// Smoothing added to every histogram bin before taking logarithms.
pub const KL_EPSILON: f64 = 1e-12;

/// Counts-based posterior model probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMarginals {
    /// One entry per model of the prior, in prior order.
    pub probs: Vec<(ModelIndex, f64)>,
    pub n_total: usize,
}

impl ModelMarginals {
    pub fn prob(&self, k: ModelIndex) -> f64 {
        self.probs.iter().find(|(m, _)| *m == k).map_or(0.0, |p| p.1)
    }

    /// Posterior probability of the chargeable group (lambda >= 1).
    pub fn chargeable_mass(&self) -> f64 {
        self.probs.iter().filter(|(k, _)| k.is_chargeable()).map(|p| p.1).sum()
    }
}

pub fn model_marginals(particles: &[ParticleState], prior: &PriorSpec) -> ModelMarginals {
    let n = particles.len();
    let probs = prior
        .models()
        .map(|k| {
            let c = particles.iter().filter(|p| p.model() == k).count();
            (k, if n == 0 { 0.0 } else { c as f64 / n as f64 })
        })
        .collect();
    ModelMarginals { probs, n_total: n }
}

/// A ratio estimate that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    /// `+inf` when only the denominator vanishes; NaN when both do.
    pub value: f64,
    /// Set when the estimate rests on an empty denominator.
    pub low_confidence: bool,
}

impl BayesFactor {
    fn ratio(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Self { value: num / den, low_confidence: false }
        } else if num > 0.0 {
            Self { value: f64::INFINITY, low_confidence: true }
        } else {
            Self { value: f64::NAN, low_confidence: true }
        }
    }

    pub fn log10(&self) -> f64 {
        self.value.log10()
    }
}

/// Posterior odds of `k1` over `k2` divided by their prior odds.
pub fn bayes_factor(m: &ModelMarginals, prior: &PriorSpec, k1: ModelIndex, k2: ModelIndex) -> BayesFactor {
    BayesFactor::ratio(m.prob(k1) * prior.model_prior(k2), m.prob(k2) * prior.model_prior(k1))
}

/// Grouped Bayes factor of chargeable (lambda >= 1) over non-chargeable models:
///
/// `[|M_k| sum_{M_l} p(k|y)/p(k)] / [|M_l| sum_{M_k} p(k|y)/p(k)]`.
pub fn bfipd(m: &ModelMarginals, prior: &PriorSpec) -> BayesFactor {
    let (mut num, mut den) = (0.0, 0.0);
    let (mut n_charge, mut n_plain) = (0usize, 0usize);
    for &(k, p) in &m.probs {
        let pk = prior.model_prior(k);
        if pk == 0.0 {
            continue;
        }
        if k.is_chargeable() {
            num += p / pk;
            n_charge += 1;
        } else {
            den += p / pk;
            n_plain += 1;
        }
    }
    if n_charge == 0 {
        return BayesFactor { value: f64::NAN, low_confidence: true };
    }
    BayesFactor::ratio(n_plain as f64 * num, n_charge as f64 * den)
}

/// `exp(log Z_k1 - log Z_k2)`.
pub fn evidence_bayes_factor(log_z1: f64, log_z2: f64) -> Result<f64> {
    if !log_z1.is_finite() || !log_z2.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "non-finite evidence ({log_z1}, {log_z2})"
        )));
    }
    Ok((log_z1 - log_z2).exp())
}

/// Model-averaged property histograms on a 1 m depth grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub depths: Vec<f64>,
    /// Bin edges of the log10 conductivity histograms.
    pub cond_edges: Vec<f64>,
    pub charge_edges: Vec<f64>,
    /// `[depth][bin]`, each row summing to one.
    pub cond_density: Vec<Vec<f64>>,
    pub charge_density: Vec<Vec<f64>>,
    pub doi_cond: f64,
    pub doi_charge: f64,
}

/// Value of one stack's property at `depth`. An interface at exactly
/// `depth` already applies.
pub fn property_at(state: &ParticleState, profile: Profile, depth: f64) -> f64 {
    let i = state.depths(profile).partition_point(|&z| z <= depth);
    match profile {
        Profile::Conductive => {
            if i == 0 {
                state.phi_b
            } else {
                state.phi[i - 1]
            }
        }
        Profile::Chargeable => {
            if i == 0 {
                0.0
            } else {
                state.m[i - 1]
            }
        }
    }
}

fn bin_of(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    (((x - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
}

fn edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn histogram_rows(particles: &[ParticleState], profile: Profile, depths: &[f64], lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let w = 1.0 / particles.len().max(1) as f64;
    depths
        .par_iter()
        .map(|&z| {
            let mut row = vec![0.0; DEPTH_GRID_BINS];
            for p in particles {
                row[bin_of(property_at(p, profile, z), lo, hi, DEPTH_GRID_BINS)] += w;
            }
            row
        })
        .collect()
}

/// Posterior mean of a profile's property at each depth (log10 S/m for
/// conductivity, fraction for chargeability).
pub fn mean_profile(particles: &[ParticleState], profile: Profile, depths: &[f64]) -> Vec<f64> {
    let n = particles.len().max(1) as f64;
    depths
        .par_iter()
        .map(|&z| particles.iter().map(|p| property_at(p, profile, z)).sum::<f64>() / n)
        .collect()
}

/// Histogram of a profile's prior marginal at `depth`. Conductivity is
/// uniform at every depth. Chargeability is zero when no chargeable
/// interface lies above `depth` and uniform otherwise.
pub fn prior_row(prior: &PriorSpec, profile: Profile, depth: f64) -> Vec<f64> {
    let n = DEPTH_GRID_BINS;
    match profile {
        Profile::Conductive => vec![1.0 / n as f64; n],
        Profile::Chargeable => {
            let q = (1.0 - depth / prior.z_max).clamp(0.0, 1.0);
            let l = prior.lambda_max;
            let p0 = (0..=l).map(|j| q.powi(j as i32)).sum::<f64>() / (l + 1) as f64;
            let b = prior.m;
            let mut row = vec![(1.0 - p0) / n as f64; n];
            row[bin_of(0.0, b.low, b.high, n)] += p0;
            row
        }
    }
}

/// `KL(p || q)` in nats with both rows smoothed by [`KL_EPSILON`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().map(|x| x + KL_EPSILON).sum();
    let sq: f64 = q.iter().map(|x| x + KL_EPSILON).sum();
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let a = (a + KL_EPSILON) / sp;
            let b = (b + KL_EPSILON) / sq;
            a * (a / b).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Shallowest grid depth below which the divergence stays under the threshold.
pub fn doi_from_divergence(depths: &[f64], divergence: &[f64], threshold: f64) -> f64 {
    match divergence.iter().rposition(|&d| d >= threshold) {
        None => depths.first().copied().unwrap_or(0.0),
        Some(i) if i + 1 < depths.len() => depths[i + 1],
        Some(i) => depths[i],
    }
}

/// Per-depth divergences of the grid's rows from the prior marginals.
pub fn depth_divergences(grid: &DepthGrid, prior: &PriorSpec) -> (Vec<f64>, Vec<f64>) {
    let cond = grid
        .depths
        .iter()
        .zip(&grid.cond_density)
        .map(|(&z, r)| kl_divergence(r, &prior_row(prior, Profile::Conductive, z)))
        .collect();
    let charge = grid
        .depths
        .iter()
        .zip(&grid.charge_density)
        .map(|(&z, r)| kl_divergence(r, &prior_row(prior, Profile::Chargeable, z)))
        .collect();
    (cond, charge)
}

/// Conductivity and chargeability DOI depths.
pub fn depth_of_investigation(grid: &DepthGrid, prior: &PriorSpec, threshold: f64) -> (f64, f64) {
    let (c, m) = depth_divergences(grid, prior);
    (
        doi_from_divergence(&grid.depths, &c, threshold),
        doi_from_divergence(&grid.depths, &m, threshold),
    )
}

/// Model-averaged depth histograms and DOI (threshold 1) of an equally weighted cloud.
pub fn depth_marginal_grid(particles: &[ParticleState], prior: &PriorSpec) -> DepthGrid {
    let n_depth = prior.z_max.floor() as usize + 1;
    let depths: Vec<f64> = (0..n_depth).map(|i| i as f64).collect();
    let (p, m) = (prior.phi, prior.m);
    let mut grid = DepthGrid {
        cond_density: histogram_rows(particles, Profile::Conductive, &depths, p.low, p.high),
        charge_density: histogram_rows(particles, Profile::Chargeable, &depths, m.low, m.high),
        cond_edges: edges(p.low, p.high, DEPTH_GRID_BINS),
        charge_edges: edges(m.low, m.high, DEPTH_GRID_BINS),
        depths,
        doi_cond: 0.0,
        doi_charge: 0.0,
    };
    let (a, b) = depth_of_investigation(&grid, prior, 1.0);
    grid.doi_cond = a;
    grid.doi_charge = b;
    grid
}

/// Per-gate posterior predictive statistics of the observed sounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpdSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// `(y - mean) / sd`.
    pub residual: Vec<f64>,
    pub draws: usize,
    pub failed: usize,
}

impl PpdSummary {
    /// Fraction of residuals inside `[-bound, bound]`.
    pub fn fraction_within(&self, bound: f64) -> f64 {
        let n = self.residual.len().max(1);
        self.residual.iter().filter(|r| r.abs() <= bound).count() as f64 / n as f64
    }
}

/// Posterior predictive check from `n_draws` particles drawn uniformly from
/// an equally weighted cloud, each simulated with noise. Standard deviations
/// are floored at the additive noise level, and never below [`EPS_AN_FLOOR`].
pub fn ppd_summary<R: Rng + ?Sized>(
    particles: &[ParticleState],
    engine: &ForwardEngine,
    noise: &NoiseModel,
    y: &Sounding,
    n_draws: usize,
    rng: &mut R,
) -> Result<PpdSummary> {
    if particles.is_empty() {
        return Err(Error::EmptyWeights);
    }
    let g = y.y.len();
    if noise.len() != g {
        return Err(Error::LengthMismatch { expected: g, got: noise.len() });
    }
    let picks: Vec<(usize, u64)> = (0..n_draws)
        .map(|_| (rng.random_range(0..particles.len()), rng.random()))
        .collect();
    let sims: Vec<Option<Vec<f64>>> = picks
        .par_iter()
        .map(|&(i, seed)| {
            let clean = engine.response(&particles[i]).ok()?;
            let mut r = <crate::rng::StreamRng as rand::SeedableRng>::seed_from_u64(seed);
            add_noise(&clean, noise, &mut r).ok().map(|s| s.y)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = sims.iter().flatten().collect();
    let failed = n_draws - ok.len();
    if ok.is_empty() {
        return Err(Error::NonFiniteResponse { gate: 0 });
    }
    let n = ok.len() as f64;
    let mut mean = vec![0.0; g];
    for s in &ok {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v / n;
        }
    }
    let sd: Vec<f64> = (0..g)
        .map(|j| {
            let var = if ok.len() > 1 {
                ok.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            var.sqrt().max(noise.eps_an[j]).max(EPS_AN_FLOOR)
        })
        .collect();
    let residual = (0..g).map(|j| (y.y[j] - mean[j]) / sd[j]).collect();
    Ok(PpdSummary { mean, sd, residual, draws: ok.len(), failed })
}
