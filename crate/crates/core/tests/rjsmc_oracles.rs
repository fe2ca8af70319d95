use aipdetect_core::model::{log_prior_density, sample_prior_in_model};
use aipdetect_core::rjsmc::moves::{apply_move, MoveContext, MoveKind};
use aipdetect_core::rjsmc::proposals::{property_indices, zca_sqrt, ProposalSuite};
use aipdetect_core::rjsmc::{birth_transform, run_rjsmc, Particle, RjsmcConfig};
use aipdetect_core::toy::{BackgroundGaussian, FlatLikelihood, NestedGaussian};
use aipdetect_core::{ModelIndex, ParticleState, PriorSpec, Profile};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn random_colouring(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.2);
    zca_sqrt(&(&a * a.transpose() + DMatrix::identity(n, n) * 0.05))
}

/// Jacobian of the birth map (v, u) -> v' by central differences.
fn finite_difference_det(
    st: &ParticleState,
    profile: Profile,
    depth: f64,
    u: f64,
    s: &DMatrix<f64>,
    prior: &PriorSpec,
) -> f64 {
    let v = st.properties(profile);
    let n = v.len();
    let eval = |v: &[f64], u: f64| -> Vec<f64> {
        let mut x = st.clone();
        x.set_profile(profile, st.depths(profile).to_vec(), v.to_vec());
        birth_transform(&x, profile, depth, u, Some(s), prior).0.properties(profile)
    };
    let h = 1e-6;
    let mut jac = DMatrix::zeros(n + 1, n + 1);
    for c in 0..=n {
        let (mut vp, mut vm) = (v.clone(), v.clone());
        let (mut up, mut um) = (u, u);
        if c < n {
            vp[c] += h;
            vm[c] -= h;
        } else {
            up += h;
            um -= h;
        }
        let (a, b) = (eval(&vp, up), eval(&vm, um));
        for r in 0..=n {
            jac[(r, c)] = (a[r] - b[r]) / (2.0 * h);
        }
    }
    jac.determinant()
}

#[test]
fn birth_jacobian_matches_finite_differences() {
    let prior = PriorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut cases = 0;
    while cases < 100 {
        let profile = Profile::BOTH[cases % 2];
        let k = ModelIndex::new(rng.random_range(0..9), rng.random_range(0..9));
        // Keep properties away from the bounds so the map is evaluated inside the support.
        let mut st = sample_prior_in_model(&prior, k, &mut rng);
        st.phi_b = -1.0;
        st.phi.iter_mut().for_each(|p| *p = -1.0 + rng.random::<f64>());
        st.m.iter_mut().for_each(|m| *m = 0.4 + 0.2 * rng.random::<f64>());
        let n_new = property_indices(k.with_count(profile, k.count(profile) + 1), profile).len();
        let s = random_colouring(n_new, &mut rng);
        let depth = rng.random::<f64>() * prior.z_max;
        let u = 0.3 * rng.sample::<f64, _>(StandardNormal);
        let (born, ratio) = birth_transform(&st, profile, depth, u, Some(&s), &prior);
        if !ratio.is_finite() {
            continue;
        }
        let ln_phi = -0.5 * u * u - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let kc = k.count(profile) as f64;
        let ln_det = ratio
            - (log_prior_density(&born, &prior) - log_prior_density(&st, &prior) - (kc + 1.0).ln()
                + prior.z_max.ln()
                - ln_phi);
        let fd = finite_difference_det(&st, profile, depth, u, &s, &prior).abs();
        assert!((ln_det.exp() - fd).abs() <= 1e-6, "analytic {} vs fd {fd}", ln_det.exp());
        cases += 1;
    }
}

#[test]
fn naive_birth_acceptance_is_the_likelihood_ratio() {
    let prior = PriorSpec::default();
    let suite = ProposalSuite::fallback(&prior, 1.0);
    let like = BackgroundGaussian { y: 0.3, s: 0.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let k = ModelIndex::new(rng.random_range(0..9), rng.random_range(0..9));
        let st = sample_prior_in_model(&prior, k, &mut rng);
        let profile = Profile::BOTH[case % 2];
        let (prop, ratio) =
            aipdetect_core::rjsmc::rj_birth(&st, profile, &suite, &prior, &mut rng).unwrap();
        let l0 = aipdetect_core::LogLikelihood::log_likelihood(&like, &st).unwrap();
        let l1 = aipdetect_core::LogLikelihood::log_likelihood(&like, &prop).unwrap();
        let gamma = 0.7;
        let alpha = (ratio + gamma * (l1 - l0)).min(0.0).exp();
        let lr = (gamma * (l1 - l0)).min(0.0).exp();
        assert!((alpha - lr).abs() < 1e-12, "{alpha} vs {lr}");
    }
}

fn truncated_normal_cdf(x: f64, mu: f64, s: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::new(mu, s).unwrap();
    (n.cdf(x) - n.cdf(lo)) / (n.cdf(hi) - n.cdf(lo))
}

#[test]
fn within_model_kernel_preserves_a_gaussian_target() {
    // Background-only model; the datum constrains phi_b under its uniform prior.
    let prior = PriorSpec { kappa_max: 0, lambda_max: 0, ..PriorSpec::default() };
    let like = BackgroundGaussian { y: 0.5, s: 0.7 };
    let suite = ProposalSuite::fallback(&prior, 0.5);
    let ctx = MoveContext {
        prior: &prior,
        likelihood: &like,
        suite: &suite,
        gamma: 1.0,
        move_probs: [1.0, 0.0, 0.0],
    };
    let chains = 2000;
    let sweeps = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut finals = Vec::with_capacity(chains);
    let mut accepted = 0;
    for _ in 0..chains {
        let phi_b = loop {
            let x = like.y + like.s * rng.sample::<f64, _>(StandardNormal);
            if (-4.0..=2.0).contains(&x) {
                break x;
            }
        };
        let state = ParticleState::half_space(phi_b, rng.random::<f64>().max(1e-12), rng.random::<f64>().max(1e-12));
        let ll = aipdetect_core::LogLikelihood::log_likelihood(&like, &state).unwrap();
        let mut p = Particle { state, log_like: ll };
        for _ in 0..sweeps {
            let out = apply_move(&ctx, &p, MoveKind::Within, &mut rng);
            accepted += out.accepted as usize;
            p = out.particle;
        }
        finals.push(p.state.phi_b);
    }
    assert!(accepted > chains * sweeps / 10);
    finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = finals.len() as f64;
    let d = finals
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = truncated_normal_cdf(x, like.y, like.s, -4.0, 2.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn nested_model_odds_match_the_analytic_bayes_factor() {
    let toy = NestedGaussian::default();
    let prior = NestedGaussian::prior();
    let bf = toy.bayes_factor();
    assert!((bf - 0.4418).abs() < 1e-3);
    for seed in 0..4 {
        let cfg = RjsmcConfig { n_particles: 4000, seed, ..Default::default() };
        let out = run_rjsmc(&toy, &prior, &cfg).unwrap();
        let e = &out.evidence;
        let counts = e[1].count as f64 / e[0].count as f64;
        let z = (e[1].log_z - e[0].log_z).exp();
        assert!((counts / bf - 1.0).abs() < 0.2, "seed {seed}: counts odds {counts}");
        assert!((z / bf - 1.0).abs() < 0.2, "seed {seed}: evidence odds {z}");
        assert!((e[0].log_z - toy.log_evidence(e[0].model)).abs() < 0.1);
    }
}

#[test]
fn flat_likelihood_keeps_uniform_model_marginals() {
    let prior = PriorSpec { kappa_max: 4, lambda_max: 4, ..PriorSpec::default() };
    let cfg = RjsmcConfig { n_particles: 3000, seed: 3, ..Default::default() };
    let out = run_rjsmc(&FlatLikelihood, &prior, &cfg).unwrap();
    assert_eq!(out.gammas, vec![0.0, 1.0]);
    let n = cfg.n_particles as f64;
    let p = 1.0 / 5.0;
    let sd = (n * p * (1.0 - p)).sqrt();
    for profile in Profile::BOTH {
        let mut counts = [0usize; 5];
        for q in &out.particles {
            counts[q.state.model().count(profile)] += 1;
        }
        for c in counts {
            assert!((c as f64 - n * p).abs() <= 3.0 * sd, "{profile:?} {counts:?}");
        }
    }
    for e in &out.evidence {
        assert!(e.log_z.abs() < 1e-12);
    }
}

#[test]
fn runs_are_independent_of_thread_count() {
    let toy = NestedGaussian::default();
    let prior = NestedGaussian::prior();
    let cfg = RjsmcConfig { n_particles: 500, seed: 99, ..Default::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_rjsmc(&toy, &prior, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.particles, b.particles);
    assert_eq!(a.evidence, b.evidence);
    assert_eq!(a.diagnostics, b.diagnostics);
    let c = run_rjsmc(&toy, &prior, &RjsmcConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(a.particles, c.particles);
}
