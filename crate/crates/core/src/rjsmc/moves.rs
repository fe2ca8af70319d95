//! Within-model and birth/death moves of the reversible-jump kernel.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::proposals::ProposalSuite;
use crate::likelihood::LogLikelihood;
use crate::model::{log_prior_density, ParticleState, PriorSpec, Profile};
use crate::smc::tempered;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A state together with its cached log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: ParticleState,
    pub log_like: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Within,
    Birth,
    Death,
}

/// Result of one Metropolis-Hastings-Green step.
#[derive(Debug, Clone)]
pub struct MoveOutcome {
    pub particle: Particle,
    pub accepted: bool,
    /// `min(1, alpha)`, or `None` when the move was impossible
    /// (birth at the maximum count or death at zero).
    pub acceptance: Option<f64>,
}

/// Move probabilities and the tempered target shared by a sweep.
pub struct MoveContext<'a, L: ?Sized> {
    pub prior: &'a PriorSpec,
    pub likelihood: &'a L,
    pub suite: &'a ProposalSuite,
    pub gamma: f64,
    /// Probabilities of within-model, birth and death moves.
    pub move_probs: [f64; 3],
}

fn ln_phi(u: f64) -> f64 {
    -0.5 * u * u - LN_SQRT_2PI
}

/// Deterministic birth map. Inserts an interface at `depth` into `profile`.
///
/// With a colouring matrix `s` (the ZCA square root of the destination
/// model's property covariance), every property of the destination vector is
/// set to `v'[j] = v[h(j)] + s[i][j] * u` with `i` the inserted layer, and the
/// new layer starts from the layer above it. Without colouring, `u` is the new
/// layer's property value and everything else is unchanged.
///
/// Returns the proposed state and the log of its prior, proposal and Jacobian
/// ratio; the tempered likelihood ratio is added by the caller.
pub fn birth_transform(
    state: &ParticleState,
    profile: Profile,
    depth: f64,
    u: f64,
    colouring: Option<&DMatrix<f64>>,
    prior: &PriorSpec,
) -> (ParticleState, f64) {
    let depths = state.depths(profile);
    let k = depths.len();
    let p = depths.partition_point(|&z| z < depth);
    let v = state.properties(profile);
    let off = v.len() - k;
    let js = p + off;
    let nb = js.checked_sub(1);
    let base = |j: usize| -> f64 {
        if j < js {
            v[j]
        } else if j == js {
            nb.map_or(0.0, |b| v[b])
        } else {
            v[j - 1]
        }
    };
    let bounds = prior.property_bounds(profile);
    let (v_new, log_q, log_det) = match colouring {
        Some(s) => {
            let vn: Vec<f64> = (0..=v.len()).map(|j| base(j) + s[(js, j)] * u).collect();
            let det = s[(js, js)] - nb.map_or(0.0, |b| s[(js, b)]);
            (vn, ln_phi(u), det.abs().ln())
        }
        None => {
            let vn: Vec<f64> = (0..=v.len()).map(|j| if j == js { u } else { base(j) }).collect();
            (vn, -bounds.width().ln(), 0.0)
        }
    };
    let mut d_new = depths.to_vec();
    d_new.insert(p, depth);
    let mut out = state.clone();
    out.set_profile(profile, d_new, v_new);
    let lp_new = log_prior_density(&out, prior);
    if lp_new == f64::NEG_INFINITY || !log_det.is_finite() {
        return (out, f64::NEG_INFINITY);
    }
    let ratio = lp_new - log_prior_density(state, prior) - ((k + 1) as f64).ln() + prior.z_max.ln()
        - log_q
        + log_det;
    (out, ratio)
}

/// Inverse of [`birth_transform`]: removes the interface at `position` of
/// `profile`. Returns the reduced state, the auxiliary variable that maps it
/// back, and the log ratio, which is the exact negative of the birth ratio.
pub fn death_transform(
    state: &ParticleState,
    profile: Profile,
    position: usize,
    colouring: Option<&DMatrix<f64>>,
    prior: &PriorSpec,
) -> (ParticleState, f64, f64) {
    let depths = state.depths(profile);
    let vp = state.properties(profile);
    let off = vp.len() - depths.len();
    let js = position + off;
    let nb = js.checked_sub(1);
    let (v, u) = match colouring {
        Some(s) => {
            let det = s[(js, js)] - nb.map_or(0.0, |b| s[(js, b)]);
            if det == 0.0 {
                return (state.clone(), f64::NAN, f64::NEG_INFINITY);
            }
            let u = (vp[js] - nb.map_or(0.0, |b| vp[b])) / det;
            let v: Vec<f64> = (0..vp.len())
                .filter(|&j| j != js)
                .map(|j| vp[j] - s[(js, j)] * u)
                .collect();
            (v, u)
        }
        None => {
            let mut v = vp.clone();
            let u = v.remove(js);
            (v, u)
        }
    };
    let mut d = depths.to_vec();
    let removed = d.remove(position);
    let mut out = state.clone();
    out.set_profile(profile, d, v);
    if log_prior_density(&out, prior) == f64::NEG_INFINITY {
        return (out, u, f64::NEG_INFINITY);
    }
    let (_, birth) = birth_transform(&out, profile, removed, u, colouring, prior);
    (out, u, -birth)
}

/// Propose a birth in `profile`. Returns `None` at the maximum count.
pub fn rj_birth<R: Rng + ?Sized>(
    state: &ParticleState,
    profile: Profile,
    suite: &ProposalSuite,
    prior: &PriorSpec,
    rng: &mut R,
) -> Option<(ParticleState, f64)> {
    let k = state.model();
    if k.count(profile) >= prior.max_count(profile) {
        return None;
    }
    let depth = loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            break x * prior.z_max;
        }
    };
    let colouring = suite.colouring(k.with_count(profile, k.count(profile) + 1), profile);
    let u = match colouring {
        Some(_) => rng.sample(StandardNormal),
        None => {
            let b = prior.property_bounds(profile);
            b.low + rng.random::<f64>() * b.width()
        }
    };
    Some(birth_transform(state, profile, depth, u, colouring, prior))
}

/// Propose the death of a uniformly chosen interface in `profile`. Returns
/// `None` when the profile has no interfaces.
pub fn rj_death<R: Rng + ?Sized>(
    state: &ParticleState,
    profile: Profile,
    suite: &ProposalSuite,
    prior: &PriorSpec,
    rng: &mut R,
) -> Option<(ParticleState, f64)> {
    let k = state.model();
    let n = k.count(profile);
    if n == 0 {
        return None;
    }
    let pos = rng.random_range(0..n);
    let (s, _, r) = death_transform(state, profile, pos, suite.colouring(k, profile), prior);
    Some((s, r))
}

/// Random-walk proposal along one randomly chosen eigen-direction.
pub fn within_model_proposal<R: Rng + ?Sized>(
    state: &ParticleState,
    suite: &ProposalSuite,
    rng: &mut R,
) -> ParticleState {
    let k = state.model();
    let prop = suite.within(k);
    let mut v = state.to_vector();
    let r = rng.random_range(0..v.len());
    let z: f64 = rng.sample(StandardNormal);
    let step = prop.scale * prop.sd[r] * z;
    for (j, x) in v.iter_mut().enumerate() {
        *x += step * prop.directions[(j, r)];
    }
    ParticleState::from_vector(k, &v)
}

fn accept<R: Rng + ?Sized, L: LogLikelihood + ?Sized>(
    ctx: &MoveContext<'_, L>,
    current: &Particle,
    proposal: ParticleState,
    log_ratio: f64,
    rng: &mut R,
) -> MoveOutcome {
    if log_ratio == f64::NEG_INFINITY || log_ratio.is_nan() {
        return MoveOutcome {
            particle: current.clone(),
            accepted: false,
            acceptance: Some(0.0),
        };
    }
    // A failed forward evaluation counts as a rejection.
    let ll = ctx.likelihood.log_likelihood(&proposal).unwrap_or(f64::NEG_INFINITY);
    let mut log_a = log_ratio + tempered(ctx.gamma, ll) - tempered(ctx.gamma, current.log_like);
    if ll == f64::NEG_INFINITY && ctx.gamma > 0.0 {
        log_a = f64::NEG_INFINITY;
    }
    if log_a.is_nan() {
        log_a = f64::NEG_INFINITY;
    }
    let a = log_a.min(0.0).exp();
    let u: f64 = rng.random();
    if u < a {
        MoveOutcome {
            particle: Particle { state: proposal, log_like: ll },
            accepted: true,
            acceptance: Some(a),
        }
    } else {
        MoveOutcome {
            particle: current.clone(),
            accepted: false,
            acceptance: Some(a),
        }
    }
}

fn impossible(current: &Particle) -> MoveOutcome {
    MoveOutcome {
        particle: current.clone(),
        accepted: false,
        acceptance: None,
    }
}

/// One move of the given kind; birth and death pick a profile uniformly.
pub fn apply_move<R: Rng + ?Sized, L: LogLikelihood + ?Sized>(
    ctx: &MoveContext<'_, L>,
    current: &Particle,
    kind: MoveKind,
    rng: &mut R,
) -> MoveOutcome {
    match kind {
        MoveKind::Within => {
            let prop = within_model_proposal(&current.state, ctx.suite, rng);
            let lr = log_prior_density(&prop, ctx.prior) - log_prior_density(&current.state, ctx.prior);
            accept(ctx, current, prop, lr, rng)
        }
        MoveKind::Birth | MoveKind::Death => {
            let profile = if rng.random::<bool>() { Profile::Conductive } else { Profile::Chargeable };
            let proposed = if kind == MoveKind::Birth {
                rj_birth(&current.state, profile, ctx.suite, ctx.prior, rng)
            } else {
                rj_death(&current.state, profile, ctx.suite, ctx.prior, rng)
            };
            match proposed {
                Some((s, lr)) => accept(ctx, current, s, lr, rng),
                None => impossible(current),
            }
        }
    }
}

/// Choose a move kind according to `move_probs`.
pub fn choose_move<R: Rng + ?Sized>(probs: &[f64; 3], rng: &mut R) -> MoveKind {
    let u: f64 = rng.random::<f64>() * (probs[0] + probs[1] + probs[2]);
    if u < probs[0] {
        MoveKind::Within
    } else if u < probs[0] + probs[1] {
        MoveKind::Birth
    } else {
        MoveKind::Death
    }
}

/// Per-kind acceptance tallies of a mutation sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveTally {
    pub proposed: [usize; 3],
    pub accepted: [usize; 3],
}

impl MoveTally {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        let i = kind as usize;
        self.proposed[i] += 1;
        self.accepted[i] += accepted as usize;
    }

    pub fn merge(mut self, other: Self) -> Self {
        for i in 0..3 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
        self
    }

    pub fn rate(&self, kind: MoveKind) -> f64 {
        let i = kind as usize;
        if self.proposed[i] == 0 {
            f64::NAN
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }
}

/// `r` sweeps of the mixed kernel applied to one particle.
pub fn mutate<R: Rng + ?Sized, L: LogLikelihood + ?Sized>(
    ctx: &MoveContext<'_, L>,
    particle: Particle,
    r: usize,
    rng: &mut R,
) -> (Particle, MoveTally) {
    let mut p = particle;
    let mut tally = MoveTally::default();
    for _ in 0..r {
        let kind = choose_move(&ctx.move_probs, rng);
        let out = apply_move(ctx, &p, kind, rng);
        tally.record(kind, out.accepted);
        p = out.particle;
    }
    (p, tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_prior_in_model, ModelIndex};
    use crate::rjsmc::proposals::{property_indices, zca_sqrt};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.1);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.01
    }

    #[test]
    fn birth_then_death_is_exactly_antisymmetric() {
        let prior = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut checked = 0;
        for case in 0..200 {
            let profile = Profile::BOTH[case % 2];
            let k = ModelIndex::new(rng.random_range(0..9), rng.random_range(0..9));
            let st = sample_prior_in_model(&prior, k, &mut rng);
            let n_prop = property_indices(k.with_count(profile, k.count(profile) + 1), profile).len();
            let s = zca_sqrt(&random_spd(n_prop, &mut rng));
            let depth = rng.random::<f64>() * prior.z_max;
            let u: f64 = rng.sample(StandardNormal);
            let (born, fwd) = birth_transform(&st, profile, depth, u, Some(&s), &prior);
            if !fwd.is_finite() {
                continue;
            }
            let pos = born.depths(profile).iter().position(|&z| z == depth).unwrap();
            let (back, u_back, rev) = death_transform(&born, profile, pos, Some(&s), &prior);
            assert!((fwd + rev).abs() <= 1e-10, "{fwd} {rev}");
            assert!((u - u_back).abs() < 1e-9);
            let (a, b) = (st.to_vector(), back.to_vector());
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
            checked += 1;
        }
        assert!(checked > 50, "{checked}");
    }

    #[test]
    fn naive_birth_ratio_cancels() {
        let prior = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..50 {
            let profile = Profile::BOTH[case % 2];
            let k = ModelIndex::new(rng.random_range(0..9), rng.random_range(0..9));
            let st = sample_prior_in_model(&prior, k, &mut rng);
            let b = prior.property_bounds(profile);
            let u = b.low + rng.random::<f64>() * b.width();
            let (_, r) = birth_transform(&st, profile, rng.random::<f64>() * prior.z_max, u, None, &prior);
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn birth_at_maximum_is_impossible() {
        let prior = PriorSpec { kappa_max: 1, lambda_max: 0, ..PriorSpec::default() };
        let suite = ProposalSuite::fallback(&prior, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let st = sample_prior_in_model(&prior, ModelIndex::new(1, 0), &mut rng);
        assert!(rj_birth(&st, Profile::Conductive, &suite, &prior, &mut rng).is_none());
        assert!(rj_birth(&st, Profile::Chargeable, &suite, &prior, &mut rng).is_none());
        assert!(rj_death(&st, Profile::Chargeable, &suite, &prior, &mut rng).is_none());
        assert!(rj_death(&st, Profile::Conductive, &suite, &prior, &mut rng).is_some());
    }
}
