use aipdetect_core::forward::{
    frequency_to_time, ForwardEngine, ForwardOptions, FrequencyGrid, MU0,
};
use aipdetect_core::numeric::gauss_legendre;
use aipdetect_core::{forward, merge_profiles, AemSystem, ParticleState};
use num_complex::Complex64;
use statrs::function::erf::erf;

/// `-dBz/dt` (T/s) at the centre of a loop on a half-space after a unit step-off.
fn half_space_dbdt(t: f64, sigma: f64, a: f64) -> f64 {
    let theta = (MU0 * sigma / (4.0 * t)).sqrt();
    let x = theta * a;
    let dh = -(1.0 / (sigma * MU0 * a.powi(3)))
        * (3.0 * erf(x)
            - 2.0 / std::f64::consts::PI.sqrt() * x * (3.0 + 2.0 * x * x) * (-x * x).exp());
    -MU0 * dh
}

fn surface_step_system() -> AemSystem {
    AemSystem {
        tx_height: 0.0,
        ..AemSystem::default()
    }
    .with_step()
}

fn half_space(sigma: f64) -> ParticleState {
    ParticleState::half_space(sigma.log10(), 1e-3, 1.0)
}

fn three_layer(m: f64, basement: f64) -> ParticleState {
    ParticleState {
        phi_b: -2.0,
        phi: vec![-1.0, basement.log10()],
        z_sigma: vec![20.0, 40.0],
        m: vec![m, 0.0],
        z_m: vec![20.0, 40.0],
        tau: 4.07e-4,
        c: 1.0,
    }
}

#[test]
fn half_space_matches_closed_form_at_all_gates() {
    let sys = surface_step_system();
    let (x, w) = gauss_legendre(64);
    for &sigma in &[0.001, 0.01, 0.1] {
        let y = forward(&half_space(sigma), &sys).unwrap();
        for (g, v) in sys.gates.iter().zip(&y.values) {
            let half = 0.5 * (g.end - g.start);
            let exact: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| 0.5 * wi * half_space_dbdt(g.start + half * (xi + 1.0), sigma, sys.tx_radius))
                .sum::<f64>()
                * 1e12;
            let rel = (v / exact - 1.0).abs();
            assert!(rel < 0.02, "sigma {sigma}: gate {g:?} rel err {rel:.4}");
        }
    }
}

#[test]
fn late_time_slope_is_minus_five_halves() {
    let sys = surface_step_system();
    let y = forward(&half_space(0.01), &sys).unwrap();
    let n = sys.gates.len();
    let (a, b) = (n - 6, n - 1);
    let slope = (y.values[b].ln() - y.values[a].ln())
        / (sys.gates[b].center().ln() - sys.gates[a].center().ln());
    assert!((slope + 2.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn doubling_grid_density_is_converged() {
    let sys = AemSystem::default();
    let coarse = ForwardEngine::new(&sys).unwrap();
    let fine = ForwardEngine::with_options(
        &sys,
        ForwardOptions {
            grid_density: 2 * ForwardOptions::default().grid_density,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(fine.frequency_grid().omegas.len() >= 2 * coarse.frequency_grid().omegas.len() - 2);
    for st in [half_space(0.01), three_layer(0.0, 0.001), three_layer(0.5, 0.01)] {
        let a = coarse.response(&st).unwrap();
        let b = fine.response(&st).unwrap();
        for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            let scale = x.abs().max(y.abs()).max(1e-3);
            assert!((x - y).abs() / scale < 1e-3, "gate {i}: {x} vs {y}");
        }
    }
}

#[test]
fn refining_gate_quadrature_is_converged() {
    let sys = AemSystem::default();
    let base = ForwardEngine::new(&sys).unwrap();
    let fine = ForwardEngine::with_options(
        &sys,
        ForwardOptions {
            gate_nodes: 32,
            waveform_nodes: 32,
            ..Default::default()
        },
    )
    .unwrap();
    for st in [half_space(0.003), three_layer(0.3, 0.001)] {
        let a = base.response(&st).unwrap();
        let b = fine.response(&st).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            let scale = x.abs().max(y.abs()).max(1e-3);
            assert!((x - y).abs() / scale < 1e-3, "{x} vs {y}");
        }
    }
}

#[test]
fn non_chargeable_three_layer_is_positive_and_decaying() {
    let y = forward(&three_layer(0.0, 0.001), &AemSystem::default()).unwrap();
    assert!(y.values.iter().all(|&v| v > 0.0), "{:?}", y.values);
    assert!(y.values.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn strong_chargeability_produces_negative_late_gates() {
    let y = forward(&three_layer(0.8, 0.001), &AemSystem::default()).unwrap();
    let n = y.values.len();
    assert!(y.values[n / 2..].iter().any(|&v| v < 0.0), "{:?}", y.values);
}

#[test]
fn forward_depends_only_on_merged_profile() {
    let sys = AemSystem::default();
    let a = three_layer(0.4, 0.01);
    // Same earth with a redundant conductive interface and different inert chargeable depths.
    let mut b = a.clone();
    b.phi = vec![-2.0, -1.0, -2.0];
    b.z_sigma = vec![10.0, 20.0, 40.0];
    assert_eq!(merge_profiles(&a).sigma_inf.len() + 1, merge_profiles(&b).sigma_inf.len());
    let ya = forward(&a, &sys).unwrap();
    let yb = forward(&b, &sys).unwrap();
    for (x, y) in ya.values.iter().zip(&yb.values) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12), "{x} vs {y}");
    }
    let mut c = a.clone();
    c.z_m = vec![20.0, 40.0];
    assert_eq!(forward(&c, &sys).unwrap(), ya);
}

#[test]
fn zero_chargeability_matches_real_conductivity_path() {
    // With every chargeability zero the Cole-Cole parameters must be inert.
    let sys = AemSystem::default();
    let mut a = three_layer(0.0, 0.01);
    let ya = forward(&a, &sys).unwrap();
    a.tau = 0.9;
    a.c = 0.2;
    let yb = forward(&a, &sys).unwrap();
    for (x, y) in ya.values.iter().zip(&yb.values) {
        assert!((x - y).abs() <= 1e-10 * x.abs());
    }
}

#[test]
fn frequency_to_time_reproduces_engine_samples() {
    let sys = surface_step_system();
    let engine = ForwardEngine::new(&sys).unwrap();
    let profile = merge_profiles(&half_space(0.01));
    let grid: FrequencyGrid = engine.frequency_grid();
    let h: Vec<Complex64> = grid
        .omegas
        .iter()
        .map(|&w| engine.frequency_response(&profile, w))
        .collect();
    let (times, s) = engine.step_response_samples(&profile);
    for (t, v) in times.iter().zip(&s).skip(2).step_by(7) {
        let g = frequency_to_time(&grid, &h, *t).unwrap();
        assert!((g / v - 1.0).abs() < 1e-9, "t={t}: {g} vs {v}");
        let exact = half_space_dbdt(*t, 0.01, sys.tx_radius);
        assert!((g / exact - 1.0).abs() < 0.02);
    }
}

#[test]
fn invalid_system_is_rejected() {
    let mut sys = AemSystem::default();
    sys.gates[3].start = sys.gates[2].start;
    assert!(ForwardEngine::new(&sys).is_err());
    let mut sys = AemSystem::default();
    sys.gates.last_mut().unwrap().end = 0.05;
    assert!(ForwardEngine::new(&sys).is_err());
}
