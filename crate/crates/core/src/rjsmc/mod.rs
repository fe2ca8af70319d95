//! Adaptive reversible-jump SMC over the joint model/parameter space.
//!
//! Weights are kept normalised within each model, so resampling never moves
//! mass between models; transitions between models happen only through the
//! birth/death moves of the mutation kernel. Per-model evidences accumulate
//! from the within-model incremental weight sums.

pub mod moves;
pub mod proposals;

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use moves::{
    apply_move, birth_transform, death_transform, mutate, rj_birth, rj_death, MoveContext, MoveKind,
    MoveTally, Particle,
};
pub use proposals::{recycling_weights, ArchivedStep, ProposalSuite, WithinModelProposal};

use crate::error::{Error, Result};
use crate::likelihood::LogLikelihood;
use crate::model::{sample_prior, ModelIndex, PriorSpec, Profile};
use crate::numeric::log_sum_exp;
use crate::rng::stream;
use crate::smc::{bisect_gamma, ess_log, systematic_resample, tempered, PHASE_INIT, PHASE_MUTATE, PHASE_RESAMPLE};
use proposals::{model_slot, prior_fallback, profile_slot, property_indices, slot_model};

/// Stream phase of the scale-tuning trials; the index encodes round and particle.
pub const PHASE_TUNE: u64 = 3;
/// Stream phase of the acceptance-rate trials.
pub const PHASE_RATE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RjsmcConfig {
    pub n_particles: usize,
    /// Target TESS fraction for choosing the next temperature.
    pub alpha: f64,
    /// Probability that a particle is never moved by the least-accepted move type.
    pub c_mutation: f64,
    pub max_steps: usize,
    /// Upper bound on the number of mutation sweeps per step.
    pub max_mutation_steps: usize,
    /// Number of most recent archived steps recycled for adaptation.
    pub recycle_window: usize,
    /// Fraction of the cloud used for trial moves.
    pub trial_fraction: f64,
    pub tune_rounds: usize,
    pub target_acceptance: f64,
    pub acceptance_tolerance: f64,
    /// Within-model, birth and death probabilities.
    pub move_probs: [f64; 3],
    /// Use prior-draw birth/death instead of the coloured transform.
    pub naive_rj: bool,
    pub initial_scale: f64,
    pub seed: u64,
}

impl Default for RjsmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 2000,
            alpha: 0.5,
            c_mutation: 0.01,
            max_steps: 500,
            max_mutation_steps: 100,
            recycle_window: 5,
            trial_fraction: 0.1,
            tune_rounds: 5,
            target_acceptance: 0.44,
            acceptance_tolerance: 0.05,
            move_probs: [0.5, 0.25, 0.25],
            naive_rj: false,
            initial_scale: 2.38,
            seed: 0,
        }
    }
}

impl RjsmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_particles < 2 {
            return bad("need at least two particles");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.c_mutation > 0.0 && self.c_mutation < 1.0) {
            return bad("c_mutation must lie in (0, 1)");
        }
        if !(self.trial_fraction > 0.0 && self.trial_fraction <= 1.0) {
            return bad("trial_fraction must lie in (0, 1]");
        }
        if self.move_probs.iter().any(|p| !(*p >= 0.0)) || self.move_probs.iter().sum::<f64>() <= 0.0 {
            return bad("move probabilities must be non-negative and not all zero");
        }
        if self.recycle_window == 0 || self.max_mutation_steps == 0 {
            return bad("recycle_window and max_mutation_steps must be positive");
        }
        if !(self.initial_scale > 0.0) {
            return bad("initial_scale must be positive");
        }
        Ok(())
    }
}

/// Particles with within-model normalised weights and per-model evidences.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub prior: PriorSpec,
    pub particles: Vec<Particle>,
    /// Log weights, normalised to sum to one within each model.
    pub log_w: Vec<f64>,
    pub gamma: f64,
    /// log Z-hat of each model's tempered target, by model slot.
    pub log_z: Vec<f64>,
    /// False once a model's evidence was carried over an annealing step
    /// without particles to estimate the increment.
    pub evidence_complete: Vec<bool>,
}

impl ParticleCloud {
    /// Equally weighted cloud at temperature zero.
    pub fn from_prior_particles(prior: &PriorSpec, particles: Vec<Particle>) -> Self {
        let slots = prior.model_count();
        let mut c = Self {
            prior: prior.clone(),
            log_w: vec![0.0; particles.len()],
            particles,
            gamma: 0.0,
            log_z: vec![0.0; slots],
            evidence_complete: vec![true; slots],
        };
        c.normalise();
        c
    }

    pub fn slot(&self, i: usize) -> usize {
        model_slot(&self.prior, self.particles[i].state.model())
    }

    /// Particle indices grouped by model slot.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.prior.model_count()];
        for i in 0..self.particles.len() {
            g[self.slot(i)].push(i);
        }
        g
    }

    pub fn counts(&self) -> Vec<usize> {
        self.groups().iter().map(|g| g.len()).collect()
    }

    fn normalise(&mut self) {
        for g in self.groups() {
            let lw: Vec<f64> = g.iter().map(|&i| self.log_w[i]).collect();
            let t = log_sum_exp(&lw);
            for &i in &g {
                self.log_w[i] = if t.is_finite() { self.log_w[i] - t } else { -(g.len() as f64).ln() };
            }
        }
    }

    /// Total effective sample size: the sum of within-model ESS values.
    pub fn tess(&self) -> f64 {
        tess(&self.log_w, &self.groups())
    }
}

/// Sum over groups of the ESS of each group's log weights.
pub fn tess(log_w: &[f64], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| ess_log(&g.iter().map(|&i| log_w[i]).collect::<Vec<_>>()))
        .sum()
}

/// Next temperature: TESS after reweighting is `alpha * N` (within 1%), or 1.
pub fn next_gamma(cloud: &ParticleCloud, alpha: f64) -> f64 {
    let n = cloud.particles.len() as f64;
    let groups = cloud.groups();
    let g0 = cloud.gamma;
    bisect_gamma(g0, alpha * n, 0.01 * n, |g| {
        let lw: Vec<f64> = cloud
            .log_w
            .iter()
            .zip(&cloud.particles)
            .map(|(&w, p)| w + tempered(g - g0, p.log_like))
            .collect();
        tess(&lw, &groups)
    })
}

/// Reweight to `gamma_next`, updating each model's evidence by its
/// incremental weight sum. Returns the TESS after reweighting.
pub fn reweight_cloud(cloud: &mut ParticleCloud, gamma_next: f64) -> f64 {
    let dg = gamma_next - cloud.gamma;
    let groups = cloud.groups();
    for (slot, g) in groups.iter().enumerate() {
        if g.is_empty() {
            if dg > 0.0 {
                cloud.evidence_complete[slot] = false;
            }
            continue;
        }
        let lw: Vec<f64> = g
            .iter()
            .map(|&i| cloud.log_w[i] + tempered(dg, cloud.particles[i].log_like))
            .collect();
        let inc = log_sum_exp(&lw);
        cloud.log_z[slot] += inc;
        for (&i, &w) in g.iter().zip(&lw) {
            cloud.log_w[i] = if inc.is_finite() { w - inc } else { -(g.len() as f64).ln() };
        }
    }
    cloud.gamma = gamma_next;
    tess(&cloud.log_w, &groups)
}

/// Systematic resampling inside each model; model counts are preserved and
/// particles keep their positions within the cloud.
pub fn within_model_resample<R: Rng + ?Sized>(cloud: &mut ParticleCloud, rng: &mut R) {
    let old = cloud.particles.clone();
    for g in cloud.groups() {
        if g.is_empty() {
            continue;
        }
        let w: Vec<f64> = g.iter().map(|&i| cloud.log_w[i].exp()).collect();
        let idx = systematic_resample(&w, g.len(), rng);
        for (&dst, &src) in g.iter().zip(&idx) {
            cloud.particles[dst] = old[g[src]].clone();
        }
        for &i in &g {
            cloud.log_w[i] = -(g.len() as f64).ln();
        }
    }
}

/// Mutation sweeps needed so the least-accepted move type leaves a particle
/// unmoved with probability at most `c`. Rates are clamped to `[0.01, 0.99]`.
pub fn num_mutation_steps(rates: &[f64], c: f64) -> usize {
    let p = rates
        .iter()
        .filter(|r| r.is_finite())
        .fold(f64::INFINITY, |a, &r| a.min(r))
        .clamp(0.01, 0.99);
    let p = if p.is_finite() { p } else { 0.99 };
    (c.ln() / (1.0 - p).ln()).ceil().max(1.0) as usize
}

/// Archived post-mutation cloud of one annealing step.
#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    pub step: usize,
    pub gamma: f64,
    pub log_z: Vec<f64>,
    /// (model slot, flattened parameters, log-likelihood)
    pub records: Vec<(usize, Vec<f64>, f64)>,
}

impl ArchiveEntry {
    pub fn from_cloud(step: usize, cloud: &ParticleCloud) -> Self {
        Self {
            step,
            gamma: cloud.gamma,
            log_z: cloud.log_z.clone(),
            records: (0..cloud.particles.len())
                .map(|i| (cloud.slot(i), cloud.particles[i].state.to_vector(), cloud.particles[i].log_like))
                .collect(),
        }
    }
}

/// Build proposals for every model from recycled archive records targeting
/// the tempered posterior at `gamma_t`. Models whose recycled ESS is below
/// `d + 2` fall back to prior variances. Scales are taken from `scales`.
pub fn adapt_proposals(
    prior: &PriorSpec,
    history: &[ArchiveEntry],
    gamma_t: f64,
    scales: &[f64],
    naive_rj: bool,
) -> ProposalSuite {
    let slots = prior.model_count();
    let mut suite = ProposalSuite::fallback(prior, 1.0);
    let adapted: Vec<(proposals::WithinModelProposal, [Option<nalgebra::DMatrix<f64>>; 2])> = (0..slots)
        .into_par_iter()
        .map(|slot| {
            let k = slot_model(prior, slot);
            let d = k.dimension();
            let mut hist = Vec::with_capacity(history.len());
            let mut samples = Vec::new();
            for h in history {
                let mut lls = Vec::new();
                for (s, v, l) in &h.records {
                    if *s == slot {
                        samples.push(v.clone());
                        lls.push(*l);
                    }
                }
                hist.push(ArchivedStep {
                    step: h.step,
                    gamma: h.gamma,
                    log_z: Some(h.log_z[slot]),
                    log_likes: lls,
                });
            }
            let fallback = (prior_fallback(prior, k, scales[slot]), [None, None]);
            if samples.len() < d + 2 {
                return fallback;
            }
            let log_nu: Vec<f64> = match recycling_weights(k, &hist, gamma_t) {
                Ok(v) => v.into_iter().flatten().collect(),
                Err(_) => return fallback,
            };
            if ess_log(&log_nu) < (d + 2) as f64 || log_nu.iter().any(|x| x.is_nan()) {
                return fallback;
            }
            let (_, cov) = proposals::weighted_covariance(&samples, &log_nu);
            let (u, l) = proposals::eigen(&cov);
            let within = proposals::WithinModelProposal {
                directions: u,
                sd: l.iter().map(|x| x.sqrt()).collect(),
                scale: scales[slot],
                fallback: false,
            };
            let mut colour = [None, None];
            if !naive_rj {
                for p in Profile::BOTH {
                    let idx = property_indices(k, p);
                    if idx.is_empty() {
                        continue;
                    }
                    let sub = cov.select_rows(&idx).select_columns(&idx);
                    colour[profile_slot(p)] = Some(proposals::zca_sqrt(&sub));
                }
            }
            (within, colour)
        })
        .collect();
    for (slot, (w, c)) in adapted.into_iter().enumerate() {
        suite.within[slot] = w;
        suite.colouring[slot] = c;
    }
    suite
}

/// Per-step record of an RJSMC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub gamma: f64,
    /// TESS after reweighting, before resampling.
    pub tess: f64,
    /// Particle count of every model after mutation, by model slot.
    pub counts: Vec<usize>,
    pub log_z: Vec<f64>,
    /// Trial acceptance rates (within, birth, death) used to choose the sweep count.
    pub trial_rates: [f64; 3],
    /// Realised acceptance rates during mutation.
    pub acceptance: [f64; 3],
    pub mutation_steps: usize,
    pub mutation_steps_uncapped: usize,
    pub adapted_models: usize,
    pub fallback_models: usize,
}

/// Evidence of one model at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvidence {
    pub model: ModelIndex,
    pub log_z: f64,
    pub complete: bool,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct RjsmcOutput {
    pub prior: PriorSpec,
    /// Equally weighted posterior particles.
    pub particles: Vec<Particle>,
    pub gammas: Vec<f64>,
    pub evidence: Vec<ModelEvidence>,
    pub diagnostics: Vec<StepReport>,
}

impl RjsmcOutput {
    pub fn states(&self) -> Vec<crate::model::ParticleState> {
        self.particles.iter().map(|p| p.state.clone()).collect()
    }
}

fn trial_indices(n: usize, fraction: f64) -> Vec<usize> {
    let stride = ((1.0 / fraction).round() as usize).max(1);
    (0..n).step_by(stride).collect()
}

/// Tune each model's scale multiplier by log-bisection on trial
/// within-model moves so the acceptance rate approaches the target.
fn tune_scales<L: LogLikelihood + ?Sized>(
    cloud: &ParticleCloud,
    likelihood: &L,
    suite: &mut ProposalSuite,
    cfg: &RjsmcConfig,
    step: usize,
    trial: &[usize],
) {
    let slots = cloud.prior.model_count();
    let mut lo: Vec<Option<f64>> = vec![None; slots];
    let mut hi: Vec<Option<f64>> = vec![None; slots];
    let mut done = vec![false; slots];
    let n = cloud.particles.len() as u64;
    for round in 0..cfg.tune_rounds {
        let ctx = MoveContext {
            prior: &cloud.prior,
            likelihood,
            suite,
            gamma: cloud.gamma,
            move_probs: cfg.move_probs,
        };
        let acc: Vec<(usize, f64)> = trial
            .par_iter()
            .map(|&i| {
                let mut rng = stream(cfg.seed, step as u64, PHASE_TUNE, round as u64 * n + i as u64);
                let out = apply_move(&ctx, &cloud.particles[i], MoveKind::Within, &mut rng);
                (cloud.slot(i), out.acceptance.unwrap_or(0.0))
            })
            .collect();
        let mut sum = vec![0.0; slots];
        let mut cnt = vec![0usize; slots];
        for (s, a) in acc {
            sum[s] += a;
            cnt[s] += 1;
        }
        for s in 0..slots {
            if cnt[s] == 0 || done[s] {
                continue;
            }
            let rate = sum[s] / cnt[s] as f64;
            let cur = suite.within[s].scale;
            if (rate - cfg.target_acceptance).abs() <= cfg.acceptance_tolerance {
                done[s] = true;
                continue;
            }
            let next = if rate > cfg.target_acceptance {
                lo[s] = Some(cur);
                hi[s].map_or(cur * 2.0, |h| (cur * h).sqrt())
            } else {
                hi[s] = Some(cur);
                lo[s].map_or(cur * 0.5, |l| (cur * l).sqrt())
            };
            suite.within[s].scale = next.clamp(1e-6, 1e3);
        }
    }
}

/// Acceptance probabilities of each move type on the trial subsample.
fn trial_rates<L: LogLikelihood + ?Sized>(
    cloud: &ParticleCloud,
    ctx: &MoveContext<'_, L>,
    cfg: &RjsmcConfig,
    step: usize,
    trial: &[usize],
) -> [f64; 3] {
    let n = cloud.particles.len() as u64;
    let kinds = [MoveKind::Within, MoveKind::Birth, MoveKind::Death];
    let mut rates = [f64::NAN; 3];
    for (ki, &kind) in kinds.iter().enumerate() {
        if cfg.move_probs[ki] == 0.0 {
            continue;
        }
        // Proposals beyond the count limits are rejections of this move type.
        let acc: Vec<f64> = trial
            .par_iter()
            .map(|&i| {
                let mut rng = stream(cfg.seed, step as u64, PHASE_RATE, ki as u64 * n + i as u64);
                apply_move(ctx, &cloud.particles[i], kind, &mut rng).acceptance.unwrap_or(0.0)
            })
            .collect();
        if !acc.is_empty() {
            rates[ki] = acc.iter().sum::<f64>() / acc.len() as f64;
        }
    }
    rates
}

/// Run the sampler from the prior to the posterior.
pub fn run_rjsmc<L: LogLikelihood + ?Sized>(
    likelihood: &L,
    prior: &PriorSpec,
    cfg: &RjsmcConfig,
) -> Result<RjsmcOutput> {
    run_rjsmc_with_observer(likelihood, prior, cfg, |_, _| {})
}

/// As [`run_rjsmc`], calling `observer` after every annealing step.
pub fn run_rjsmc_with_observer<L, F>(
    likelihood: &L,
    prior: &PriorSpec,
    cfg: &RjsmcConfig,
    mut observer: F,
) -> Result<RjsmcOutput>
where
    L: LogLikelihood + ?Sized,
    F: FnMut(&StepReport, &ParticleCloud),
{
    prior.validate()?;
    cfg.validate()?;
    let n = cfg.n_particles;
    let states: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| sample_prior(prior, &mut stream(cfg.seed, 0, PHASE_INIT, i as u64)))
        .collect();
    let lls = crate::smc::initial_log_likes(&states, |s| likelihood.log_likelihood(s))?;
    let particles = states
        .into_iter()
        .zip(lls)
        .map(|(state, log_like)| Particle { state, log_like })
        .collect();
    let mut cloud = ParticleCloud::from_prior_particles(prior, particles);
    let mut archive: VecDeque<ArchiveEntry> = VecDeque::new();
    archive.push_back(ArchiveEntry::from_cloud(0, &cloud));
    let mut scales = vec![cfg.initial_scale; prior.model_count()];
    let mut gammas = vec![0.0];
    let mut diagnostics = Vec::new();
    let trial = trial_indices(n, cfg.trial_fraction);
    let mut step = 0;

    while cloud.gamma < 1.0 {
        step += 1;
        if step > cfg.max_steps {
            return Err(Error::StepCapExceeded(cfg.max_steps));
        }
        let next = next_gamma(&cloud, cfg.alpha);
        let step_tess = reweight_cloud(&mut cloud, next);
        gammas.push(next);
        within_model_resample(&mut cloud, &mut stream(cfg.seed, step as u64, PHASE_RESAMPLE, 0));

        let history: Vec<ArchiveEntry> = archive.iter().cloned().collect();
        let mut suite = adapt_proposals(prior, &history, cloud.gamma, &scales, cfg.naive_rj);
        tune_scales(&cloud, likelihood, &mut suite, cfg, step, &trial);
        for (s, w) in scales.iter_mut().zip(&suite.within) {
            *s = w.scale;
        }
        let ctx = MoveContext {
            prior,
            likelihood,
            suite: &suite,
            gamma: cloud.gamma,
            move_probs: cfg.move_probs,
        };
        let rates = trial_rates(&cloud, &ctx, cfg, step, &trial);
        let r_uncapped = num_mutation_steps(&rates, cfg.c_mutation);
        let r = r_uncapped.min(cfg.max_mutation_steps);

        let moved: Vec<(Particle, MoveTally)> = cloud
            .particles
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream(cfg.seed, step as u64, PHASE_MUTATE, i as u64);
                mutate(&ctx, p.clone(), r, &mut rng)
            })
            .collect();
        let mut tally = MoveTally::default();
        cloud.particles = moved
            .into_iter()
            .map(|(p, t)| {
                tally = tally.merge(t);
                p
            })
            .collect();
        // Resampled particles are equally weighted within their new models.
        cloud.log_w = vec![0.0; n];
        cloud.normalise();

        archive.push_back(ArchiveEntry::from_cloud(step, &cloud));
        while archive.len() > cfg.recycle_window {
            archive.pop_front();
        }
        let adapted = suite.within.iter().filter(|w| !w.fallback).count();
        let report = StepReport {
            step,
            gamma: cloud.gamma,
            tess: step_tess,
            counts: cloud.counts(),
            log_z: cloud.log_z.clone(),
            trial_rates: rates,
            acceptance: [
                tally.rate(MoveKind::Within),
                tally.rate(MoveKind::Birth),
                tally.rate(MoveKind::Death),
            ],
            mutation_steps: r,
            mutation_steps_uncapped: r_uncapped,
            adapted_models: adapted,
            fallback_models: suite.within.len() - adapted,
        };
        observer(&report, &cloud);
        diagnostics.push(report);
    }

    let counts = cloud.counts();
    let evidence = prior
        .models()
        .enumerate()
        .map(|(slot, model)| ModelEvidence {
            model,
            log_z: cloud.log_z[slot],
            complete: cloud.evidence_complete[slot],
            count: counts[slot],
        })
        .collect();
    Ok(RjsmcOutput {
        prior: prior.clone(),
        particles: cloud.particles,
        gammas,
        evidence,
        diagnostics,
    })
}
