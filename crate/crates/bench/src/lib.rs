//! Shared fixtures for the criterion benches.

use aipdetect_core::ParticleState;

/// Conductive layer with a chargeable second layer over a resistive basement.
pub fn three_layer(m: f64) -> ParticleState {
    ParticleState {
        phi_b: -2.0,
        phi: vec![-1.0, -3.0],
        z_sigma: vec![20.0, 40.0],
        m: vec![m, 0.0],
        z_m: vec![20.0, 40.0],
        tau: 4.07e-4,
        c: 1.0,
    }
}
