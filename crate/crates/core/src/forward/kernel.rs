//! Frequency-domain pieces: Cole-Cole conductivity, the layered-earth TE
//! reflection coefficient and digital-filter Hankel transforms.

use num_complex::Complex64;

use super::filters::{HANKEL_BASE, HANKEL_J0, HANKEL_J1};
use crate::error::{Error, Result};
use crate::model::EarthProfile;

pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Cole-Cole complex conductivity, `sigma_inf * (1 - m / (1 + (i w tau)^c))`.
pub fn cole_cole(sigma_inf: f64, m: f64, tau: f64, c: f64, omega: f64) -> Result<Complex64> {
    if !(sigma_inf > 0.0 && sigma_inf.is_finite()) {
        return Err(Error::ColeColeDomain(format!("sigma_inf = {sigma_inf}")));
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::ColeColeDomain(format!("m = {m}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::ColeColeDomain(format!("tau = {tau}")));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::ColeColeDomain(format!("c = {c}")));
    }
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::ColeColeDomain(format!("omega = {omega}")));
    }
    Ok(cole_cole_unchecked(sigma_inf, m, tau, c, omega))
}

#[inline]
pub(crate) fn cole_cole_unchecked(sigma_inf: f64, m: f64, tau: f64, c: f64, omega: f64) -> Complex64 {
    if m == 0.0 {
        return Complex64::new(sigma_inf, 0.0);
    }
    // (i w tau)^c on the principal branch: |w tau|^c * exp(i c pi / 2).
    let mag = (omega * tau).powf(c);
    let (s, co) = (c * std::f64::consts::FRAC_PI_2).sin_cos();
    let denom = Complex64::new(1.0 + mag * co, mag * s);
    sigma_inf * (Complex64::new(1.0, 0.0) - m / denom)
}

/// Per-segment `i w mu0 sigma_hat` for one frequency.
pub(crate) fn segment_admittances(profile: &EarthProfile, omega: f64) -> Vec<Complex64> {
    profile
        .sigma_inf
        .iter()
        .zip(&profile.m_seg)
        .map(|(&s, &m)| {
            let sh = cole_cole_unchecked(s, m, profile.tau, profile.c, omega);
            Complex64::new(0.0, omega * MU0) * sh
        })
        .collect()
}

/// Principal square root without the polar round trip.
#[inline]
fn csqrt(z: Complex64) -> Complex64 {
    let r = (z.re * z.re + z.im * z.im).sqrt();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if z.re >= 0.0 {
        let re = (0.5 * (r + z.re)).sqrt();
        Complex64::new(re, 0.5 * z.im / re)
    } else {
        let im = (0.5 * (r - z.re)).sqrt().copysign(z.im);
        Complex64::new(0.5 * z.im / im, im)
    }
}

/// TE reflection coefficient seen from the air for pre-computed segment
/// admittances `k2[j] = i w mu0 sigma_hat_j` and thicknesses.
#[inline]
pub(crate) fn reflection(lambda: f64, k2: &[Complex64], thick: &[f64]) -> Complex64 {
    let l2 = lambda * lambda;
    let n = k2.len();
    let mut y = csqrt(k2[n - 1] + l2);
    for j in (0..n - 1).rev() {
        let u = csqrt(k2[j] + l2);
        let e = (-2.0 * u * thick[j]).exp();
        // Admittance update with tanh(u h) = (1 - e) / (1 + e) folded in.
        let (ep, em) = (1.0 + e, 1.0 - e);
        y = u * (y * ep + u * em) / (u * ep + y * em);
    }
    (lambda - y) / (lambda + y)
}

/// TE reflection coefficient `(lambda - Y1) / (lambda + Y1)` of a layered
/// earth, built by the upward impedance recursion under the quasi-static
/// approximation.
pub fn layered_kernel(profile: &EarthProfile, omega: f64, lambda_h: f64) -> Complex64 {
    let k2 = segment_admittances(profile, omega);
    reflection(lambda_h, &k2, &profile.thicknesses())
}

/// Bessel order of a Hankel transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselOrder {
    J0,
    J1,
}

impl BesselOrder {
    pub fn weights(self) -> &'static [f64; 201] {
        match self {
            BesselOrder::J0 => &HANKEL_J0,
            BesselOrder::J1 => &HANKEL_J1,
        }
    }
}

/// `int_0^inf f(lambda) J_n(lambda r) d lambda` by the 201-point digital filter.
pub fn hankel_transform<F>(kernel: F, r: f64, order: BesselOrder) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(r > 0.0, "hankel_transform needs r > 0");
    let w = order.weights();
    HANKEL_BASE
        .iter()
        .zip(w.iter())
        .map(|(&b, &wk)| kernel(b / r) * wk)
        .sum::<f64>()
        / r
}

/// Complex-valued variant of [`hankel_transform`].
pub fn hankel_transform_complex<F>(kernel: F, r: f64, order: BesselOrder) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    assert!(r > 0.0, "hankel_transform needs r > 0");
    let w = order.weights();
    HANKEL_BASE
        .iter()
        .zip(w.iter())
        .map(|(&b, &wk)| kernel(b / r) * wk)
        .sum::<Complex64>()
        / r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{merge_profiles, ParticleState};
    use approx::assert_relative_eq;

    fn profile(sigma: &[f64], m: &[f64], interfaces: &[f64]) -> EarthProfile {
        EarthProfile {
            interfaces: interfaces.to_vec(),
            sigma_inf: sigma.to_vec(),
            m_seg: m.to_vec(),
            tau: 1e-3,
            c: 0.5,
        }
    }

    #[test]
    fn cole_cole_values() {
        assert_eq!(cole_cole(0.2, 0.0, 0.01, 0.3, 123.0).unwrap(), Complex64::new(0.2, 0.0));
        let s = cole_cole(0.1, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.re, 0.075, epsilon = 1e-15);
        assert_relative_eq!(s.im, 0.025, epsilon = 1e-15);
        let dc = cole_cole(0.1, 0.4, 0.01, 0.7, 1e-12).unwrap();
        assert_relative_eq!(dc.re, 0.06, epsilon = 1e-8);
        assert!(cole_cole(-1.0, 0.1, 0.1, 0.5, 1.0).is_err());
        assert!(cole_cole(0.1, 1.1, 0.1, 0.5, 1.0).is_err());
        assert!(cole_cole(0.1, 0.1, 0.0, 0.5, 1.0).is_err());
        assert!(cole_cole(0.1, 0.1, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn half_space_kernel_is_closed_form() {
        let (s, w, l) = (0.01, 2.0e4, 0.05);
        let p = profile(&[s], &[0.0], &[]);
        let u1 = Complex64::new(l * l, w * MU0 * s).sqrt();
        let expected = (l - u1) / (l + u1);
        let got = layered_kernel(&p, w, l);
        assert_relative_eq!((got - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn identical_segments_collapse() {
        let merged = profile(&[0.05, 0.3], &[0.2, 0.0], &[40.0]);
        let split = profile(&[0.05, 0.05, 0.3], &[0.2, 0.2, 0.0], &[15.0, 40.0]);
        for &(w, l) in &[(10.0, 1e-3), (1e4, 0.02), (1e6, 0.3)] {
            let a = layered_kernel(&merged, w, l);
            let b = layered_kernel(&split, w, l);
            assert!((a - b).norm() <= 1e-12 * a.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn null_interface_through_merge() {
        let mut st = ParticleState::half_space(-2.0, 1e-3, 0.5);
        st.phi = vec![-1.0];
        st.z_sigma = vec![30.0];
        let a = merge_profiles(&st);
        st.phi = vec![-2.0, -1.0];
        st.z_sigma = vec![10.0, 30.0];
        let b = merge_profiles(&st);
        let ka = layered_kernel(&a, 3e3, 0.01);
        let kb = layered_kernel(&b, 3e3, 0.01);
        assert!((ka - kb).norm() <= 1e-12 * ka.norm());
    }

    #[test]
    fn hankel_analytic_pairs() {
        let (a, r) = (10.0, 30.0);
        let j0 = hankel_transform(|l| (-a * l).exp(), r, BesselOrder::J0);
        let exact0 = 1.0 / (a * a + r * r).sqrt();
        assert_relative_eq!(exact0, 0.0316228, epsilon = 1e-7);
        assert!((j0 / exact0 - 1.0).abs() < 1e-6, "J0 rel err {}", j0 / exact0 - 1.0);
        let j1 = hankel_transform(|l| (-a * l).exp() * l, r, BesselOrder::J1);
        let exact1 = r / (a * a + r * r).powf(1.5);
        assert!((j1 / exact1 - 1.0).abs() < 1e-6, "J1 rel err {}", j1 / exact1 - 1.0);
        assert_eq!(hankel_transform(|_| 0.0, r, BesselOrder::J1), 0.0);
    }
}
