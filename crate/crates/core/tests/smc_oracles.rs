use aipdetect_core::rng::{stream, StreamRng};
use aipdetect_core::smc::{
    run_static_smc, GaussianRandomWalk, Schedule, SmcConfig, StaticTarget, PHASE_INIT,
};
use aipdetect_core::Result;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

/// Prior N(0, 1), likelihood N(y | theta, 1).
struct Conjugate {
    y: f64,
}

impl StaticTarget for Conjugate {
    type State = Vec<f64>;
    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
        vec![StandardNormal.sample(rng)]
    }
    fn log_prior(&self, s: &Vec<f64>) -> f64 {
        -0.5 * (LN_2PI + s[0] * s[0])
    }
    fn log_likelihood(&self, s: &Vec<f64>) -> Result<f64> {
        Ok(-0.5 * (LN_2PI + (self.y - s[0]).powi(2)))
    }
}

struct Flat;

impl StaticTarget for Flat {
    type State = Vec<f64>;
    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
        vec![StandardNormal.sample(rng)]
    }
    fn log_prior(&self, s: &Vec<f64>) -> f64 {
        -0.5 * (LN_2PI + s[0] * s[0])
    }
    fn log_likelihood(&self, _: &Vec<f64>) -> Result<f64> {
        Ok(0.0)
    }
}

/// log of int N(theta; 0, 1) N(1; theta, 1) d theta by trapezoid quadrature.
fn quadrature_log_z(y: f64) -> f64 {
    let t = Conjugate { y };
    let h = 1e-3;
    let s: f64 = (-12_000..=12_000)
        .map(|i| {
            let th = vec![i as f64 * h];
            (t.log_prior(&th) + t.log_likelihood(&th).unwrap()).exp()
        })
        .sum();
    (s * h).ln()
}

#[test]
fn conjugate_evidence_and_posterior_mean() {
    let truth = quadrature_log_z(1.0);
    assert!((truth - (-0.5 * (4.0 * std::f64::consts::PI).ln() - 0.25)).abs() < 1e-9);
    let target = Conjugate { y: 1.0 };
    let mut zs = Vec::new();
    let mut means = Vec::new();
    for seed in 0..20 {
        let cfg = SmcConfig { n_particles: 2000, seed, ..Default::default() };
        let out = run_static_smc(&target, &mut GaussianRandomWalk::optimal(1), &cfg).unwrap();
        let tele: f64 = out.diagnostics.iter().map(|d| d.log_increment).sum();
        assert!((tele - out.log_z).abs() < 1e-10);
        assert!((out.log_z - truth).abs() < 0.15, "seed {seed}: {}", out.log_z);
        zs.push(out.log_z);
        means.push(out.particles.iter().map(|p| p[0]).sum::<f64>() / 2000.0);
    }
    let mz = zs.iter().sum::<f64>() / 20.0;
    assert!((mz - truth).abs() < 0.05, "mean log Z {mz} vs {truth}");
    let mm = means.iter().sum::<f64>() / 20.0;
    // Posterior N(0.5, 0.5); 20 x 2000 draws give a standard error near 0.004.
    assert!((mm - 0.5).abs() < 0.03, "posterior mean {mm}");
}

#[test]
fn flat_likelihood_has_unit_evidence() {
    let cfg = SmcConfig { n_particles: 500, seed: 3, ..Default::default() };
    let out = run_static_smc(&Flat, &mut GaussianRandomWalk::optimal(1), &cfg).unwrap();
    assert_eq!(out.log_z, 0.0);
    assert_eq!(out.gammas, vec![0.0, 1.0]);
    let m = out.particles.iter().map(|p| p[0]).sum::<f64>() / 500.0;
    assert!(m.abs() < 3.0 / 500f64.sqrt());
}

#[test]
fn single_step_without_mutation_is_importance_sampling() {
    let target = Conjugate { y: 1.0 };
    let n = 1000;
    let seed = 9;
    let cfg = SmcConfig {
        n_particles: n,
        seed,
        mutate: false,
        schedule: Schedule::Fixed(vec![0.0, 1.0]),
        ..Default::default()
    };
    let out = run_static_smc(&target, &mut GaussianRandomWalk::optimal(1), &cfg).unwrap();
    let mean_l: f64 = (0..n)
        .map(|i| {
            let s = target.sample_prior(&mut stream(seed, 0, PHASE_INIT, i as u64));
            target.log_likelihood(&s).unwrap().exp()
        })
        .sum::<f64>()
        / n as f64;
    assert!((out.log_z - mean_l.ln()).abs() < 1e-12);
}
