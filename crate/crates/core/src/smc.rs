//! Static (single-model) SMC with likelihood annealing and an MCMC kernel.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::rng::{stream, StreamRng};

/// Stream phases; initial particle `i` is drawn from `stream(seed, 0, PHASE_INIT, i)`.
pub const PHASE_INIT: u64 = 0;
pub const PHASE_RESAMPLE: u64 = 1;
pub const PHASE_MUTATE: u64 = 2;

/// Effective sample size `1 / sum(W^2)` of normalised weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyWeights);
    }
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return Err(Error::WeightUnderflow);
    }
    Ok(1.0 / s2)
}

/// ESS of unnormalised log weights; zero when all weights vanish.
pub fn ess_log(log_w: &[f64]) -> f64 {
    let total = log_sum_exp(log_w);
    if !total.is_finite() {
        return 0.0;
    }
    let s2: f64 = log_w.iter().map(|&l| (2.0 * (l - total)).exp()).sum();
    1.0 / s2
}

/// `dgamma * log L`, treating a zero step as contributing nothing even when
/// the likelihood is zero.
#[inline]
pub fn tempered(dgamma: f64, log_like: f64) -> f64 {
    if dgamma == 0.0 {
        0.0
    } else {
        dgamma * log_like
    }
}

/// Incremental importance weights for a temperature step.
///
/// `log_w_prev` are log weights normalised to sum to one. Returns the new
/// normalised weights and the log incremental evidence `log sum_i w_i`.
pub fn reweight(
    log_w_prev: &[f64],
    log_like: &[f64],
    gamma_prev: f64,
    gamma_next: f64,
) -> Result<(Vec<f64>, f64)> {
    if log_w_prev.is_empty() {
        return Err(Error::EmptyWeights);
    }
    if log_w_prev.len() != log_like.len() {
        return Err(Error::LengthMismatch {
            expected: log_w_prev.len(),
            got: log_like.len(),
        });
    }
    if !(gamma_next > gamma_prev) {
        return Err(Error::InvalidConfig(format!(
            "temperature must increase ({gamma_prev} -> {gamma_next})"
        )));
    }
    let dg = gamma_next - gamma_prev;
    let log_w: Vec<f64> = log_w_prev
        .iter()
        .zip(log_like)
        .map(|(&w, &l)| w + tempered(dg, l))
        .collect();
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return Err(Error::WeightUnderflow);
    }
    Ok((log_w.iter().map(|l| (l - total).exp()).collect(), total))
}

/// Systematic resampling; returns ancestor indices.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// Smallest temperature in `(gamma_prev, 1]` whose effective sample size
/// reaches `target`, found by bisection. Returns 1 when the full step keeps
/// enough samples.
pub fn bisect_gamma<F>(gamma_prev: f64, target: f64, tol: f64, ess_at: F) -> f64
where
    F: Fn(f64) -> f64,
{
    if ess_at(1.0) >= target {
        return 1.0;
    }
    let (mut lo, mut hi) = (gamma_prev, 1.0);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..30 {
        mid = 0.5 * (lo + hi);
        let e = ess_at(mid);
        if (e - target).abs() <= tol {
            break;
        }
        if e > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if mid <= gamma_prev {
        // Guarantee progress even if the ESS collapses immediately.
        mid = gamma_prev + (1.0 - gamma_prev) * 1e-9;
    }
    mid
}

/// A static inference problem: prior sampler, prior density, likelihood.
pub trait StaticTarget: Sync {
    type State: Clone + Send + Sync;
    fn sample_prior(&self, rng: &mut StreamRng) -> Self::State;
    fn log_prior(&self, state: &Self::State) -> f64;
    fn log_likelihood(&self, state: &Self::State) -> Result<f64>;
}

/// Metropolis-Hastings kernel invariant for `prior * L^gamma`.
pub trait MutationKernel<T: StaticTarget>: Sync {
    /// Tune the kernel from the current equally-weighted cloud.
    fn adapt(&mut self, _particles: &[T::State]) {}

    /// One move from `state`; returns the new state, its log likelihood and
    /// whether the proposal was accepted.
    fn step(
        &self,
        target: &T,
        state: &T::State,
        log_like: f64,
        gamma: f64,
        rng: &mut StreamRng,
    ) -> (T::State, f64, bool);
}

/// Random-walk Metropolis on `Vec<f64>` with per-coordinate scales taken
/// from the cloud's standard deviations.
#[derive(Debug, Clone)]
pub struct GaussianRandomWalk {
    pub scale: f64,
    sd: Vec<f64>,
}

impl GaussianRandomWalk {
    pub fn new(scale: f64, initial_sd: Vec<f64>) -> Self {
        Self { scale, sd: initial_sd }
    }

    /// The usual `2.38 / sqrt(d)` scaling.
    pub fn optimal(dim: usize) -> Self {
        Self::new(2.38 / (dim as f64).sqrt(), vec![1.0; dim])
    }
}

impl<T> MutationKernel<T> for GaussianRandomWalk
where
    T: StaticTarget<State = Vec<f64>>,
{
    fn adapt(&mut self, particles: &[Vec<f64>]) {
        let n = particles.len() as f64;
        if particles.len() < 2 {
            return;
        }
        let d = particles[0].len();
        self.sd = (0..d)
            .map(|j| {
                let mean = particles.iter().map(|p| p[j]).sum::<f64>() / n;
                let var = particles.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                var.sqrt().max(1e-12)
            })
            .collect();
    }

    fn step(
        &self,
        target: &T,
        state: &Vec<f64>,
        log_like: f64,
        gamma: f64,
        rng: &mut StreamRng,
    ) -> (Vec<f64>, f64, bool) {
        let prop: Vec<f64> = state
            .iter()
            .zip(&self.sd)
            .map(|(&x, &s)| {
                let z: f64 = rng.sample(StandardNormal);
                x + self.scale * s * z
            })
            .collect();
        let lp_new = target.log_prior(&prop);
        if lp_new == f64::NEG_INFINITY {
            return (state.clone(), log_like, false);
        }
        let ll_new = match target.log_likelihood(&prop) {
            Ok(l) if !l.is_nan() => l,
            _ => f64::NEG_INFINITY,
        };
        let log_alpha = lp_new - target.log_prior(state) + tempered(gamma, ll_new)
            - tempered(gamma, log_like);
        let u: f64 = rng.random();
        if ll_new > f64::NEG_INFINITY && u.ln() < log_alpha {
            (prop, ll_new, true)
        } else {
            (state.clone(), log_like, false)
        }
    }
}

/// Annealing schedule choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Choose each temperature so that the post-reweight ESS is `alpha * N`.
    Adaptive,
    /// Fixed ascending temperatures starting at 0 and ending at 1.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub alpha: f64,
    /// MCMC sweeps per annealing step.
    pub mutation_steps: usize,
    pub mutate: bool,
    pub schedule: Schedule,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 2000,
            alpha: 0.5,
            mutation_steps: 5,
            mutate: true,
            schedule: Schedule::Adaptive,
            max_steps: 1000,
            seed: 0,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::InvalidConfig("need at least two particles".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if let Schedule::Fixed(g) = &self.schedule {
            let ok = g.len() >= 2
                && g[0] == 0.0
                && g[g.len() - 1] == 1.0
                && g.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(Error::InvalidConfig(
                    "fixed schedule must increase strictly from 0 to 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-step record of an annealing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub gamma: f64,
    /// ESS after reweighting, before resampling.
    pub ess: f64,
    pub log_increment: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone)]
pub struct SmcOutput<S> {
    /// Equally weighted posterior particles.
    pub particles: Vec<S>,
    pub log_likes: Vec<f64>,
    pub log_z: f64,
    pub gammas: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Evaluate the initial likelihoods, tolerating a minority of failures.
pub(crate) fn initial_log_likes<S, F>(states: &[S], f: F) -> Result<Vec<f64>>
where
    S: Sync,
    F: Fn(&S) -> Result<f64> + Sync,
{
    let ll: Vec<Option<f64>> = states
        .par_iter()
        .map(|s| f(s).ok().filter(|l| !l.is_nan()))
        .collect();
    let failed = ll.iter().filter(|l| l.is_none()).count();
    if 2 * failed > states.len() {
        return Err(Error::InitializationFailure {
            failed,
            total: states.len(),
        });
    }
    Ok(ll.into_iter().map(|l| l.unwrap_or(f64::NEG_INFINITY)).collect())
}

/// Algorithm: anneal from the prior to the posterior, accumulating the
/// evidence as the product of incremental weight sums.
pub fn run_static_smc<T, K>(target: &T, kernel: &mut K, cfg: &SmcConfig) -> Result<SmcOutput<T::State>>
where
    T: StaticTarget,
    K: MutationKernel<T>,
{
    cfg.validate()?;
    let n = cfg.n_particles;
    let mut particles: Vec<T::State> = (0..n)
        .into_par_iter()
        .map(|i| target.sample_prior(&mut stream(cfg.seed, 0, PHASE_INIT, i as u64)))
        .collect();
    let mut log_likes = initial_log_likes(&particles, |s| target.log_likelihood(s))?;
    let mut log_w = vec![-(n as f64).ln(); n];
    let mut gamma = 0.0;
    let mut log_z = 0.0;
    let mut gammas = vec![0.0];
    let mut diagnostics = Vec::new();
    let mut step = 0;

    while gamma < 1.0 {
        step += 1;
        if step > cfg.max_steps {
            return Err(Error::StepCapExceeded(cfg.max_steps));
        }
        let next = match &cfg.schedule {
            Schedule::Fixed(g) => g[step],
            Schedule::Adaptive => bisect_gamma(gamma, cfg.alpha * n as f64, 0.01 * n as f64, |g| {
                let lw: Vec<f64> = log_w
                    .iter()
                    .zip(&log_likes)
                    .map(|(&w, &l)| w + tempered(g - gamma, l))
                    .collect();
                ess_log(&lw)
            }),
        };
        let (weights, log_inc) = reweight(&log_w, &log_likes, gamma, next)?;
        log_z += log_inc;
        gamma = next;
        gammas.push(gamma);
        let step_ess = ess(&weights)?;

        let idx = systematic_resample(&weights, n, &mut stream(cfg.seed, step as u64, PHASE_RESAMPLE, 0));
        particles = idx.iter().map(|&i| particles[i].clone()).collect();
        log_likes = idx.iter().map(|&i| log_likes[i]).collect();
        log_w = vec![-(n as f64).ln(); n];

        let mut acceptance = f64::NAN;
        if cfg.mutate && cfg.mutation_steps > 0 {
            kernel.adapt(&particles);
            let k: &K = kernel;
            let moved: Vec<(T::State, f64, usize)> = particles
                .par_iter()
                .zip(log_likes.par_iter())
                .enumerate()
                .map(|(i, (s, &l))| {
                    let mut rng = stream(cfg.seed, step as u64, PHASE_MUTATE, i as u64);
                    let (mut s, mut l) = (s.clone(), l);
                    let mut acc = 0;
                    for _ in 0..cfg.mutation_steps {
                        let (s2, l2, a) = k.step(target, &s, l, gamma, &mut rng);
                        s = s2;
                        l = l2;
                        acc += a as usize;
                    }
                    (s, l, acc)
                })
                .collect();
            let total_acc: usize = moved.iter().map(|m| m.2).sum();
            acceptance = total_acc as f64 / (n * cfg.mutation_steps) as f64;
            particles = Vec::with_capacity(n);
            log_likes = Vec::with_capacity(n);
            for (s, l, _) in moved {
                particles.push(s);
                log_likes.push(l);
            }
        }
        diagnostics.push(StepDiagnostics {
            step,
            gamma,
            ess: step_ess,
            log_increment: log_inc,
            acceptance,
        });
    }

    Ok(SmcOutput {
        particles,
        log_likes,
        log_z,
        gammas,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn ess_examples() {
        assert_relative_eq!(ess(&[0.01; 100]).unwrap(), 100.0, epsilon = 1e-9);
        assert_eq!(ess(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(ess(&[0.5, 0.25, 0.25]).unwrap(), 2.6666666666666665, epsilon = 1e-12);
        assert_eq!(ess(&[]), Err(Error::EmptyWeights));
    }

    #[test]
    fn reweight_examples() {
        let lw = [0.5f64.ln(); 2];
        let (w, _) = reweight(&lw, &[0.0, 4f64.ln()], 0.0, 0.5).unwrap();
        assert_relative_eq!(w[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(w[1], 2.0 / 3.0, epsilon = 1e-14);

        let lw = [(0.2f64).ln(), (0.8f64).ln()];
        let (w, inc) = reweight(&lw, &[-3.0, -3.0], 0.2, 0.7).unwrap();
        assert_relative_eq!(w[0], 0.2, epsilon = 1e-14);
        assert_relative_eq!(inc, 0.5 * -3.0, epsilon = 1e-14);

        assert!(reweight(&lw, &[0.0, 0.0], 0.5, 0.5).is_err());
        assert_eq!(
            reweight(&lw, &[f64::NEG_INFINITY; 2], 0.0, 0.5),
            Err(Error::WeightUnderflow)
        );
    }

    #[test]
    fn systematic_resample_examples() {
        let mut rng = StreamRng::seed_from_u64(1);
        let idx = systematic_resample(&[1.0 / 3.0; 3], 3, &mut rng);
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(systematic_resample(&[1.0, 0.0, 0.0], 3, &mut rng), vec![0, 0, 0]);

        let reps = 10_000;
        let mut counts = [0.0; 3];
        for _ in 0..reps {
            for i in systematic_resample(&[0.6, 0.3, 0.1], 10, &mut rng) {
                counts[i] += 1.0;
            }
        }
        for (c, e) in counts.iter().zip([6.0, 3.0, 1.0]) {
            assert!((c / reps as f64 - e).abs() < 0.1, "{c}");
        }
    }

    proptest! {
        #[test]
        fn ess_is_permutation_invariant(w in proptest::collection::vec(0.0f64..1.0, 1..30), k in 0usize..30) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 0.0);
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            let mut r = w.clone();
            r.rotate_left(k % w.len());
            let a = ess(&w).unwrap();
            prop_assert!((a - ess(&r).unwrap()).abs() < 1e-9 * a);
            prop_assert!(a >= 1.0 - 1e-9 && a <= w.len() as f64 + 1e-9);
        }

        #[test]
        fn resampling_preserves_count(w in proptest::collection::vec(0.01f64..1.0, 1..30), n in 1usize..200, seed in any::<u64>()) {
            let mut rng = StreamRng::seed_from_u64(seed);
            let idx = systematic_resample(&w, n, &mut rng);
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.iter().all(|&i| i < w.len()));
        }
    }
}
