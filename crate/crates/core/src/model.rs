//! Decoupled transdimensional layered models.
//!
//! A state carries two independent interface stacks: one for log10
//! conductivity and one for intrinsic chargeability. The top layer of each
//! stack is the background layer; each interface introduces the property of
//! the layer directly below it, down to infinite depth. Background chargeability
//! is identically zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ln_factorial;

/// Model indicator: interface counts of the conductive and chargeable stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelIndex {
    pub kappa: usize,
    pub lambda: usize,
}

impl ModelIndex {
    pub fn new(kappa: usize, lambda: usize) -> Self {
        Self { kappa, lambda }
    }

    /// Chargeable models have at least one chargeable interface.
    pub fn is_chargeable(&self) -> bool {
        self.lambda >= 1
    }

    /// Length of the flattened continuous parameter vector.
    pub fn dimension(&self) -> usize {
        1 + 2 * self.kappa + 2 * self.lambda + 2
    }

    pub fn count(&self, profile: Profile) -> usize {
        match profile {
            Profile::Conductive => self.kappa,
            Profile::Chargeable => self.lambda,
        }
    }

    pub fn with_count(&self, profile: Profile, n: usize) -> Self {
        match profile {
            Profile::Conductive => Self::new(n, self.lambda),
            Profile::Chargeable => Self::new(self.kappa, n),
        }
    }
}

impl std::fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.kappa, self.lambda)
    }
}

/// Which of the two decoupled interface stacks a move acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Profile {
    Conductive,
    Chargeable,
}

impl Profile {
    pub const BOTH: [Profile; 2] = [Profile::Conductive, Profile::Chargeable];
}

/// Closed-or-open interval for a uniform prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    /// Left-open interval `(low, high]`.
    pub fn contains_left_open(&self, x: f64) -> bool {
        x > self.low && x <= self.high
    }

    fn sample_left_open<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // random::<f64>() is in [0, 1), so 1 - u is in (0, 1].
        let u: f64 = rng.random();
        self.low + (1.0 - u) * self.width()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.low + u * self.width()
    }
}

fn default_kappa_max() -> usize {
    9
}
fn default_lambda_max() -> usize {
    9
}
fn default_z_max() -> f64 {
    400.0
}
fn default_phi() -> Bounds {
    Bounds::new(-4.0, 2.0)
}
fn default_unit() -> Bounds {
    Bounds::new(0.0, 1.0)
}

/// Prior over models and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default = "default_kappa_max")]
    pub kappa_max: usize,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: usize,
    /// Maximum interface depth (m).
    #[serde(default = "default_z_max")]
    pub z_max: f64,
    /// log10 conductivity bounds (log10 S/m).
    #[serde(default = "default_phi")]
    pub phi: Bounds,
    #[serde(default = "default_unit")]
    pub m: Bounds,
    /// Cole-Cole time constant bounds (s).
    #[serde(default = "default_unit")]
    pub tau: Bounds,
    #[serde(default = "default_unit")]
    pub c: Bounds,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            kappa_max: default_kappa_max(),
            lambda_max: default_lambda_max(),
            z_max: default_z_max(),
            phi: default_phi(),
            m: default_unit(),
            tau: default_unit(),
            c: default_unit(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |b: &Bounds| b.low.is_finite() && b.high.is_finite() && b.high > b.low;
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(Error::InvalidPrior(format!("z_max must be positive, got {}", self.z_max)));
        }
        for (name, b) in [("phi", &self.phi), ("m", &self.m), ("tau", &self.tau), ("c", &self.c)] {
            if !finite(b) {
                return Err(Error::InvalidPrior(format!("{name} bounds must be finite and ordered")));
            }
        }
        if self.m.low < 0.0 || self.m.high > 1.0 {
            return Err(Error::InvalidPrior("chargeability bounds must lie within [0, 1]".into()));
        }
        if self.tau.low < 0.0 {
            return Err(Error::InvalidPrior("tau must be positive".into()));
        }
        if self.c.low < 0.0 || self.c.high > 1.0 {
            return Err(Error::InvalidPrior("c bounds must lie within [0, 1]".into()));
        }
        Ok(())
    }

    /// |M| = (kappa_max + 1)(lambda_max + 1).
    pub fn model_count(&self) -> usize {
        (self.kappa_max + 1) * (self.lambda_max + 1)
    }

    pub fn models(&self) -> impl Iterator<Item = ModelIndex> + '_ {
        (0..=self.kappa_max)
            .flat_map(move |k| (0..=self.lambda_max).map(move |l| ModelIndex::new(k, l)))
    }

    pub fn contains_model(&self, k: ModelIndex) -> bool {
        k.kappa <= self.kappa_max && k.lambda <= self.lambda_max
    }

    /// Prior probability of a single model (uniform over both counts).
    pub fn model_prior(&self, k: ModelIndex) -> f64 {
        if self.contains_model(k) {
            1.0 / self.model_count() as f64
        } else {
            0.0
        }
    }

    pub fn max_count(&self, profile: Profile) -> usize {
        match profile {
            Profile::Conductive => self.kappa_max,
            Profile::Chargeable => self.lambda_max,
        }
    }

    /// Prior bounds of the property carried by a profile's layers.
    pub fn property_bounds(&self, profile: Profile) -> Bounds {
        match profile {
            Profile::Conductive => self.phi,
            Profile::Chargeable => self.m,
        }
    }

    /// Log density of `n` ordered interface depths: log(n! / z_max^n).
    pub fn log_depth_density(&self, n: usize) -> f64 {
        ln_factorial(n) - n as f64 * self.z_max.ln()
    }
}

/// One sample of the joint model/parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// Background log10 conductivity (log10 S/m).
    pub phi_b: f64,
    /// Per-layer log10 conductivity, one per conductive interface.
    pub phi: Vec<f64>,
    /// Ascending conductive interface depths (m).
    pub z_sigma: Vec<f64>,
    /// Per-layer intrinsic chargeability, one per chargeable interface.
    pub m: Vec<f64>,
    /// Ascending chargeable interface depths (m).
    pub z_m: Vec<f64>,
    /// Cole-Cole time constant (s); inert when there are no chargeable layers.
    pub tau: f64,
    /// Cole-Cole frequency dependence; inert when there are no chargeable layers.
    pub c: f64,
}

impl ParticleState {
    /// Homogeneous, non-chargeable half-space.
    pub fn half_space(phi_b: f64, tau: f64, c: f64) -> Self {
        Self {
            phi_b,
            phi: Vec::new(),
            z_sigma: Vec::new(),
            m: Vec::new(),
            z_m: Vec::new(),
            tau,
            c,
        }
    }

    pub fn model(&self) -> ModelIndex {
        ModelIndex::new(self.phi.len(), self.m.len())
    }

    pub fn depths(&self, profile: Profile) -> &[f64] {
        match profile {
            Profile::Conductive => &self.z_sigma,
            Profile::Chargeable => &self.z_m,
        }
    }

    /// Property vector of one stack. The conductive vector starts with the
    /// background value; the chargeable background is fixed at zero and is
    /// not part of its vector.
    pub fn properties(&self, profile: Profile) -> Vec<f64> {
        match profile {
            Profile::Conductive => {
                let mut v = Vec::with_capacity(self.phi.len() + 1);
                v.push(self.phi_b);
                v.extend_from_slice(&self.phi);
                v
            }
            Profile::Chargeable => self.m.clone(),
        }
    }

    /// Replace one stack's layers. `properties` follows the layout of
    /// [`ParticleState::properties`].
    pub fn set_profile(&mut self, profile: Profile, depths: Vec<f64>, properties: Vec<f64>) {
        match profile {
            Profile::Conductive => {
                debug_assert_eq!(properties.len(), depths.len() + 1);
                self.phi_b = properties[0];
                self.phi = properties[1..].to_vec();
                self.z_sigma = depths;
            }
            Profile::Chargeable => {
                debug_assert_eq!(properties.len(), depths.len());
                self.m = properties;
                self.z_m = depths;
            }
        }
    }

    /// Flattened continuous parameters:
    /// `[phi_b, phi.., z_sigma.., m.., z_m.., tau, c]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.model().dimension());
        v.push(self.phi_b);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.z_sigma);
        v.extend_from_slice(&self.m);
        v.extend_from_slice(&self.z_m);
        v.push(self.tau);
        v.push(self.c);
        v
    }

    pub fn from_vector(model: ModelIndex, v: &[f64]) -> Self {
        assert_eq!(v.len(), model.dimension(), "parameter vector length");
        let (k, l) = (model.kappa, model.lambda);
        let mut at = 1;
        let mut take = |n: usize| {
            let s = v[at..at + n].to_vec();
            at += n;
            s
        };
        let phi = take(k);
        let z_sigma = take(k);
        let m = take(l);
        let z_m = take(l);
        Self {
            phi_b: v[0],
            phi,
            z_sigma,
            m,
            z_m,
            tau: v[v.len() - 2],
            c: v[v.len() - 1],
        }
    }
}

fn sorted_uniform_depths<R: Rng + ?Sized>(n: usize, z_max: f64, rng: &mut R) -> Vec<f64> {
    let mut z: Vec<f64> = (0..n)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u * z_max;
            }
        })
        .collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Ties have probability zero; resample if one ever occurs.
    if z.windows(2).any(|w| w[0] >= w[1]) {
        return sorted_uniform_depths(n, z_max, rng);
    }
    z
}

/// Draw a state from the joint prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> ParticleState {
    let kappa = rng.random_range(0..=prior.kappa_max);
    let lambda = rng.random_range(0..=prior.lambda_max);
    sample_prior_in_model(prior, ModelIndex::new(kappa, lambda), rng)
}

/// Draw the continuous parameters from the prior conditional on a model.
pub fn sample_prior_in_model<R: Rng + ?Sized>(
    prior: &PriorSpec,
    model: ModelIndex,
    rng: &mut R,
) -> ParticleState {
    let phi_b = prior.phi.sample(rng);
    let phi = (0..model.kappa).map(|_| prior.phi.sample(rng)).collect();
    let z_sigma = sorted_uniform_depths(model.kappa, prior.z_max, rng);
    let m = (0..model.lambda).map(|_| prior.m.sample(rng)).collect();
    let z_m = sorted_uniform_depths(model.lambda, prior.z_max, rng);
    let tau = prior.tau.sample_left_open(rng);
    let c = prior.c.sample_left_open(rng);
    ParticleState {
        phi_b,
        phi,
        z_sigma,
        m,
        z_m,
        tau,
        c,
    }
}

fn depths_valid(z: &[f64], z_max: f64) -> bool {
    z.iter().all(|&d| d > 0.0 && d < z_max) && z.windows(2).all(|w| w[0] < w[1])
}

/// Log of the conditional parameter density p(theta | k), excluding p(k).
pub fn log_conditional_prior(state: &ParticleState, prior: &PriorSpec) -> f64 {
    let model = state.model();
    if !prior.contains_model(model)
        || state.z_sigma.len() != state.phi.len()
        || state.z_m.len() != state.m.len()
    {
        return f64::NEG_INFINITY;
    }
    if !depths_valid(&state.z_sigma, prior.z_max) || !depths_valid(&state.z_m, prior.z_max) {
        return f64::NEG_INFINITY;
    }
    let phi_ok = prior.phi.contains_closed(state.phi_b)
        && state.phi.iter().all(|&p| prior.phi.contains_closed(p));
    let m_ok = state.m.iter().all(|&x| prior.m.contains_closed(x));
    if !phi_ok
        || !m_ok
        || !prior.tau.contains_left_open(state.tau)
        || !prior.c.contains_left_open(state.c)
    {
        return f64::NEG_INFINITY;
    }
    let (k, l) = (model.kappa as f64, model.lambda as f64);
    prior.log_depth_density(model.kappa) + prior.log_depth_density(model.lambda)
        - (k + 1.0) * prior.phi.width().ln()
        - l * prior.m.width().ln()
        - prior.tau.width().ln()
        - prior.c.width().ln()
}

/// Log joint prior density log p(k) + log p(theta | k); `-inf` outside the support.
pub fn log_prior_density(state: &ParticleState, prior: &PriorSpec) -> f64 {
    let lp = log_conditional_prior(state, prior);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp - ((prior.kappa_max + 1) as f64).ln() - ((prior.lambda_max + 1) as f64).ln()
}

/// Piecewise-constant earth obtained by merging both stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarthProfile {
    /// Ascending depths (m) of the union of both stacks' interfaces.
    pub interfaces: Vec<f64>,
    /// High-frequency conductivity per segment (S/m).
    pub sigma_inf: Vec<f64>,
    /// Intrinsic chargeability per segment.
    pub m_seg: Vec<f64>,
    pub tau: f64,
    pub c: f64,
}

impl EarthProfile {
    pub fn segment_count(&self) -> usize {
        self.sigma_inf.len()
    }

    /// Thickness of every segment except the basal half-space.
    pub fn thicknesses(&self) -> Vec<f64> {
        let mut top = 0.0;
        self.interfaces
            .iter()
            .map(|&z| {
                let h = z - top;
                top = z;
                h
            })
            .collect()
    }

    /// Index of the segment containing `depth` (segments are `[top, bottom)`).
    pub fn segment_at(&self, depth: f64) -> usize {
        self.interfaces.partition_point(|&z| z <= depth)
    }
}

/// Direct sum of the conductive and chargeable stacks.
pub fn merge_profiles(state: &ParticleState) -> EarthProfile {
    let mut interfaces: Vec<f64> = state.z_sigma.iter().chain(&state.z_m).copied().collect();
    interfaces.sort_by(|a, b| a.partial_cmp(b).unwrap());
    interfaces.dedup();

    let n = interfaces.len() + 1;
    let mut sigma_inf = Vec::with_capacity(n);
    let mut m_seg = Vec::with_capacity(n);
    for s in 0..n {
        let top = if s == 0 { 0.0 } else { interfaces[s - 1] };
        let ci = state.z_sigma.partition_point(|&z| z <= top);
        let phi = if ci == 0 { state.phi_b } else { state.phi[ci - 1] };
        sigma_inf.push(10f64.powf(phi));
        let mi = state.z_m.partition_point(|&z| z <= top);
        m_seg.push(if mi == 0 { 0.0 } else { state.m[mi - 1] });
    }
    EarthProfile {
        interfaces,
        sigma_inf,
        m_seg,
        tau: state.tau,
        c: state.c,
    }
}
