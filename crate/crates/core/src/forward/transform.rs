//! Frequency-to-time transform with the 81-point sine filter.
//!
//! The engine evaluates the frequency response on a lagged grid: for times
//! `t_j = t_max * exp(-j d)` (with `d` the filter's log spacing) every filter
//! abscissa `b_k / t_j` coincides with a grid frequency, so one set of
//! frequency samples serves all times exactly. Responses between lagged
//! times are interpolated with a natural spline of `t^2 g(t)` in `ln t`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::filters::{FOURIER_BASE, FOURIER_SIN};
use super::kernel::MU0;
use crate::error::{Error, Result};

/// Log spacing of the sine filter abscissae.
pub fn filter_log_step() -> f64 {
    (FOURIER_BASE[1] / FOURIER_BASE[0]).ln()
}

/// Angular frequencies at which the frequency response is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
}

impl FrequencyGrid {
    /// Validates that the grid is strictly ascending and positive.
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.len() < 2 || omegas[0] <= 0.0 || omegas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSystem(
                "frequency grid must be positive and strictly ascending".into(),
            ));
        }
        Ok(Self { omegas })
    }

    /// Logarithmic grid from `lo` to `hi` with `per_decade` points per decade.
    pub fn log_spaced(lo: f64, hi: f64, per_decade: usize) -> Result<Self> {
        let n = ((hi / lo).log10() * per_decade as f64).ceil() as usize + 1;
        let r = (hi / lo).ln() / (n - 1) as f64;
        Self::new((0..n).map(|i| lo * (r * i as f64).exp()).collect())
    }

    /// Range of times whose filter abscissae lie inside the grid; empty when
    /// the grid is narrower than the filter.
    pub fn time_band(&self) -> (f64, f64) {
        let lo = self.omegas[0];
        let hi = self.omegas[self.omegas.len() - 1];
        (FOURIER_BASE[80] / hi, FOURIER_BASE[0] / lo)
    }
}

/// Step-off response `-dBz/dt` (T/s) at time `t` from the secondary field
/// `H(omega)` (A/m per ampere) sampled on `grid`. The imaginary part is
/// interpolated linearly in `ln omega` between grid points.
pub fn frequency_to_time(grid: &FrequencyGrid, h: &[Complex64], t: f64) -> Result<f64> {
    if h.len() != grid.omegas.len() {
        return Err(Error::LengthMismatch {
            expected: grid.omegas.len(),
            got: h.len(),
        });
    }
    let (t_min, t_max) = grid.time_band();
    let tol = 1e-9;
    if !(t > 0.0) || t < t_min * (1.0 - tol) || t > t_max * (1.0 + tol) {
        return Err(Error::BandCoverage { t, t_min, t_max });
    }
    let ln_w: Vec<f64> = grid.omegas.iter().map(|w| w.ln()).collect();
    let n = ln_w.len();
    let mut acc = 0.0;
    for (b, s) in FOURIER_BASE.iter().zip(FOURIER_SIN.iter()) {
        let x = (b / t).ln().clamp(ln_w[0], ln_w[n - 1]);
        let i = ln_w.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let f = (x - ln_w[i]) / (ln_w[i + 1] - ln_w[i]);
        let im = h[i].im + f * (h[i + 1].im - h[i].im);
        acc += im * s;
    }
    Ok(-MU0 * std::f64::consts::FRAC_2_PI * acc / t)
}

/// One lagged sub-grid: descending times and the frequencies they share.
#[derive(Debug, Clone)]
pub(crate) struct LaggedGrid {
    pub times: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl LaggedGrid {
    /// Times `t0 * exp(-j d)` down to at most `t_min`.
    pub fn new(t0: f64, t_min: f64) -> Self {
        let d = filter_log_step();
        let n = ((t0 / t_min).ln() / d).ceil().max(0.0) as usize + 1;
        let times = (0..n).map(|j| t0 * (-d * j as f64).exp()).collect();
        let omegas = (0..FOURIER_BASE.len() + n - 1)
            .map(|m| FOURIER_BASE[0] / t0 * (d * m as f64).exp())
            .collect();
        Self { times, omegas }
    }

    /// Step-off responses at every lagged time given `Im H` on `omegas`.
    pub fn transform(&self, h_im: &[f64]) -> Vec<f64> {
        self.times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let s: f64 = h_im[j..j + FOURIER_SIN.len()]
                    .iter()
                    .zip(FOURIER_SIN.iter())
                    .map(|(a, b)| a * b)
                    .sum();
                -MU0 * std::f64::consts::FRAC_2_PI * s / t
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagged_grid_matches_filter_abscissae() {
        let g = LaggedGrid::new(2e-2, 3e-6);
        assert!(*g.times.last().unwrap() <= 3e-6);
        for (j, &t) in g.times.iter().enumerate() {
            for (k, &b) in FOURIER_BASE.iter().enumerate() {
                let w = g.omegas[j + k];
                assert!((w * t / b - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn band_coverage_error() {
        let grid = FrequencyGrid::log_spaced(1e-1, 1e9, 10).unwrap();
        let h = vec![Complex64::new(0.0, 1.0); grid.omegas.len()];
        let (lo, hi) = grid.time_band();
        assert!(frequency_to_time(&grid, &h, lo * 1.01).is_ok());
        assert!(matches!(
            frequency_to_time(&grid, &h, hi * 2.0),
            Err(Error::BandCoverage { .. })
        ));
        assert!(matches!(
            frequency_to_time(&grid, &h, lo * 0.5),
            Err(Error::BandCoverage { .. })
        ));
    }

    #[test]
    fn sine_filter_transform_of_known_pair() {
        // Im H = -w / (1 + w^2) transforms to -(pi/2) e^{-t} under int Im H sin(wt) dw.
        let grid = FrequencyGrid::log_spaced(1e-4, 1e4, 200).unwrap();
        let h: Vec<Complex64> = grid
            .omegas
            .iter()
            .map(|&w| Complex64::new(0.0, -w / (1.0 + w * w)))
            .collect();
        for &t in &[0.5, 1.0, 2.0] {
            let got = frequency_to_time(&grid, &h, t).unwrap();
            let exact = MU0 * (-t as f64).exp();
            assert!((got / exact - 1.0).abs() < 1e-3, "t={t}: {got} vs {exact}");
        }
    }
}
