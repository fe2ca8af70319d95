//! Off-time dB/dt response of a concentric-loop airborne TDEM system.

pub mod filters;
mod kernel;
mod transform;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use kernel::{
    cole_cole, hankel_transform, hankel_transform_complex, layered_kernel, BesselOrder, MU0,
};
pub use transform::{filter_log_step, frequency_to_time, FrequencyGrid};

use crate::error::{Error, Result};
use crate::model::{merge_profiles, EarthProfile, ParticleState};
use crate::numeric::{gauss_legendre, CubicSpline};
use filters::{HANKEL_BASE, HANKEL_J0, HANKEL_J1};
use transform::LaggedGrid;

/// Receiver integration window (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Gate {
    pub start: f64,
    pub end: f64,
}

impl From<[f64; 2]> for Gate {
    fn from(v: [f64; 2]) -> Self {
        Gate { start: v[0], end: v[1] }
    }
}

impl From<Gate> for [f64; 2] {
    fn from(g: Gate) -> Self {
        [g.start, g.end]
    }
}

impl Gate {
    pub fn center(&self) -> f64 {
        (self.start * self.end).sqrt()
    }
}

/// `n` contiguous windows with edges spaced geometrically from `t0` to `t1`.
pub fn log_spaced_gates(t0: f64, t1: f64, n: usize) -> Vec<Gate> {
    let r = t1 / t0;
    let edge = |i: usize| t0 * r.powf(i as f64 / n as f64);
    (0..n).map(|i| Gate { start: edge(i), end: edge(i + 1) }).collect()
}

/// Transmitter current waveform. Times are in seconds with turn-off ending
/// at `t = 0`; currents are fractions of the peak current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    /// Ideal step turn-off at `t = 0`.
    Step,
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform::PiecewiseLinear {
            points: vec![[-5.0e-3, 0.0], [-4.0e-3, 1.0], [-5.0e-5, 1.0], [0.0, 0.0]],
        }
    }
}

impl Waveform {
    fn validate(&self) -> Result<()> {
        if let Waveform::PiecewiseLinear { points } = self {
            if points.len() < 2 {
                return Err(Error::InvalidSystem("waveform needs at least two points".into()));
            }
            if points.windows(2).any(|w| w[0][0] >= w[1][0]) {
                return Err(Error::InvalidSystem("waveform times must ascend".into()));
            }
            let last = points[points.len() - 1];
            if last[0] != 0.0 || last[1] != 0.0 {
                return Err(Error::InvalidSystem("waveform must end at (0, 0)".into()));
            }
            if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(Error::InvalidSystem("waveform contains non-finite values".into()));
            }
        }
        Ok(())
    }

    /// Length of the on-time (s).
    pub fn on_duration(&self) -> f64 {
        match self {
            Waveform::Step => 0.0,
            Waveform::PiecewiseLinear { points } => -points[0][0],
        }
    }

    /// Linear segments with non-zero slope: `(s0, s1, slope)`.
    fn ramps(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Waveform::Step => Vec::new(),
            Waveform::PiecewiseLinear { points } => points
                .windows(2)
                .filter_map(|w| {
                    let slope = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                    (slope != 0.0).then_some((w[0][0], w[1][0], slope))
                })
                .collect(),
        }
    }
}

fn default_tx_height() -> f64 {
    30.0
}
fn default_tx_radius() -> f64 {
    13.0
}
fn default_tx_current() -> f64 {
    1.0
}
fn default_base_frequency() -> f64 {
    25.0
}
fn default_gates() -> Vec<Gate> {
    log_spaced_gates(5.0e-6, 1.5e-2, 30)
}

/// Acquisition system geometry, waveform and gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AemSystem {
    /// Transmitter loop height above ground (m).
    #[serde(default = "default_tx_height")]
    pub tx_height: f64,
    /// Transmitter loop radius (m).
    #[serde(default = "default_tx_radius")]
    pub tx_radius: f64,
    /// Peak transmitter current (A).
    #[serde(default = "default_tx_current")]
    pub tx_current: f64,
    /// Horizontal receiver offset from the loop centre (m). A non-zero
    /// offset switches to the vertical magnetic dipole approximation.
    #[serde(default)]
    pub rx_offset: f64,
    #[serde(default)]
    pub waveform: Waveform,
    /// Waveform repetition frequency (Hz); bounds the available off-time.
    #[serde(default = "default_base_frequency")]
    pub base_frequency: f64,
    #[serde(default = "default_gates")]
    pub gates: Vec<Gate>,
}

impl Default for AemSystem {
    fn default() -> Self {
        Self {
            tx_height: default_tx_height(),
            tx_radius: default_tx_radius(),
            tx_current: default_tx_current(),
            rx_offset: 0.0,
            waveform: Waveform::default(),
            base_frequency: default_base_frequency(),
            gates: default_gates(),
        }
    }
}

impl AemSystem {
    /// Same geometry with an ideal step turn-off.
    pub fn with_step(mut self) -> Self {
        self.waveform = Waveform::Step;
        self
    }

    /// Off-time available after turn-off within one half period (s).
    pub fn off_time(&self) -> f64 {
        0.5 / self.base_frequency - self.waveform.on_duration()
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(self.tx_height.is_finite() && self.tx_height >= 0.0) {
            return Err(Error::InvalidSystem("tx_height must be non-negative".into()));
        }
        if !pos(self.tx_radius) || !pos(self.tx_current) || !pos(self.base_frequency) {
            return Err(Error::InvalidSystem(
                "tx_radius, tx_current and base_frequency must be positive".into(),
            ));
        }
        if !(self.rx_offset.is_finite() && self.rx_offset >= 0.0) {
            return Err(Error::InvalidSystem("rx_offset must be non-negative".into()));
        }
        self.waveform.validate()?;
        if self.gates.is_empty() {
            return Err(Error::InvalidSystem("at least one gate is required".into()));
        }
        for (i, g) in self.gates.iter().enumerate() {
            if !(pos(g.start) && g.end > g.start && g.end.is_finite()) {
                return Err(Error::InvalidSystem(format!("gate {i} must satisfy 0 < start < end")));
            }
        }
        if self.gates.windows(2).any(|w| w[1].start < w[0].end) {
            return Err(Error::InvalidSystem("gates must be ascending and non-overlapping".into()));
        }
        let last = self.gates[self.gates.len() - 1].end;
        if last > self.off_time() * (1.0 + 1e-9) {
            return Err(Error::InvalidSystem(format!(
                "last gate ends at {last:e} s, after the {:e} s off-time",
                self.off_time()
            )));
        }
        Ok(())
    }
}

/// Per-gate `-dB/dt` (pT/s), aligned with the system gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector {
    pub values: Vec<f64>,
}

/// Discretisation controls of the forward engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardOptions {
    /// Number of interleaved lagged sub-grids; 2 doubles the frequency density.
    pub grid_density: usize,
    /// Gauss-Legendre nodes per gate.
    pub gate_nodes: usize,
    /// Gauss-Legendre nodes per half unit of `ln t` in waveform convolution.
    pub waveform_nodes: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            grid_density: 2,
            gate_nodes: 8,
            waveform_nodes: 8,
        }
    }
}

/// Pre-computed forward operator for one system.
#[derive(Debug, Clone)]
pub struct ForwardEngine {
    system: AemSystem,
    /// Hankel abscissae and their geometry/source coefficients.
    lambdas: Vec<f64>,
    coefs: Vec<f64>,
    grids: Vec<LaggedGrid>,
    /// Ascending lagged times over all sub-grids and, for each, `(grid, index)`.
    times: Vec<f64>,
    order: Vec<(usize, usize)>,
    /// Gate operator acting on `t^2 g(t)` at `times`; rows are gates.
    gate_matrix: Vec<Vec<f64>>,
}

fn ln_gl_points(a: f64, b: f64, nodes: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    // Points and weights for int_a^b f(tau) d tau, integrated in ln(tau).
    let (la, lb) = (a.ln(), b.ln());
    let pieces = ((lb - la) * 2.0).ceil().max(1.0) as usize;
    let h = (lb - la) / pieces as f64;
    let mut out = Vec::with_capacity(pieces * nodes.0.len());
    for p in 0..pieces {
        let lo = la + h * p as f64;
        for (x, w) in nodes.0.iter().zip(&nodes.1) {
            let l = lo + 0.5 * h * (x + 1.0);
            let tau = l.exp();
            out.push((tau, 0.5 * h * w * tau));
        }
    }
    out
}

impl ForwardEngine {
    pub fn new(system: &AemSystem) -> Result<Self> {
        Self::with_options(system, ForwardOptions::default())
    }

    pub fn with_options(system: &AemSystem, opts: ForwardOptions) -> Result<Self> {
        system.validate()?;
        if opts.grid_density == 0 || opts.gate_nodes == 0 || opts.waveform_nodes == 0 {
            return Err(Error::InvalidSystem("forward options must be positive".into()));
        }
        let (lambdas, coefs) = Self::hankel_plan(system);

        // Evaluation points of the step-off response and their weights per gate.
        let gate_gl = gauss_legendre(opts.gate_nodes);
        let wave_gl = gauss_legendre(opts.waveform_nodes);
        let ramps = system.waveform.ramps();
        let mut gate_points: Vec<Vec<(f64, f64)>> = Vec::with_capacity(system.gates.len());
        for g in &system.gates {
            let mut pts = Vec::new();
            let half = 0.5 * (g.end - g.start);
            for (x, w) in gate_gl.0.iter().zip(&gate_gl.1) {
                let t = g.start + half * (x + 1.0);
                // Mean over the window: weight w / 2.
                let gw = 0.5 * w;
                match system.waveform {
                    Waveform::Step => pts.push((t, gw)),
                    Waveform::PiecewiseLinear { .. } => {
                        for &(s0, s1, slope) in &ramps {
                            for (tau, qw) in ln_gl_points(t - s1, t - s0, &wave_gl) {
                                pts.push((tau, -slope * gw * qw));
                            }
                        }
                    }
                }
            }
            gate_points.push(pts);
        }

        let d = filter_log_step();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in gate_points.iter().flatten() {
            lo = lo.min(p.0);
            hi = hi.max(p.0);
        }
        let t_lo = lo * (-2.0 * d).exp();
        let t_hi = hi * (2.0 * d).exp();
        let grids: Vec<LaggedGrid> = (0..opts.grid_density)
            .map(|sub| {
                let t0 = t_hi * (-(sub as f64) * d / opts.grid_density as f64).exp();
                LaggedGrid::new(t0, t_lo)
            })
            .collect();
        let mut order: Vec<(usize, usize)> = grids
            .iter()
            .enumerate()
            .flat_map(|(g, lg)| (0..lg.times.len()).map(move |j| (g, j)))
            .collect();
        order.sort_by(|a, b| grids[a.0].times[a.1].partial_cmp(&grids[b.0].times[b.1]).unwrap());
        let times: Vec<f64> = order.iter().map(|&(g, j)| grids[g].times[j]).collect();
        let ln_t: Vec<f64> = times.iter().map(|t| t.ln()).collect();

        // The spline is linear in its data, so the whole chain from lagged
        // samples to gate values is a fixed matrix.
        let n = times.len();
        let basis: Vec<CubicSpline> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                CubicSpline::new(ln_t.clone(), e)
            })
            .collect();
        let gate_matrix = gate_points
            .iter()
            .map(|pts| {
                (0..n)
                    .map(|j| {
                        pts.iter()
                            .map(|&(tau, w)| w * basis[j].eval(tau.ln()) / (tau * tau))
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            system: system.clone(),
            lambdas,
            coefs,
            grids,
            times,
            order,
            gate_matrix,
        })
    }

    /// Hankel abscissae with source/geometry factors folded in, pruned where
    /// the air-path attenuation makes them negligible.
    fn hankel_plan(system: &AemSystem) -> (Vec<f64>, Vec<f64>) {
        let two_h = 2.0 * system.tx_height;
        let full: Vec<(f64, f64)> = if system.rx_offset == 0.0 {
            // Central loop: Hz = (I/2) sum_k w_k lambda_k e^{-2 lambda_k h} r_TE.
            let a = system.tx_radius;
            HANKEL_BASE
                .iter()
                .zip(HANKEL_J1.iter())
                .map(|(&b, &w)| {
                    let l = b / a;
                    (l, 0.5 * system.tx_current * w * l * (-two_h * l).exp())
                })
                .collect()
        } else {
            // Vertical dipole of moment I pi a^2 observed at offset rho.
            let rho = system.rx_offset;
            let moment = system.tx_current * std::f64::consts::PI * system.tx_radius.powi(2);
            HANKEL_BASE
                .iter()
                .zip(HANKEL_J0.iter())
                .map(|(&b, &w)| {
                    let l = b / rho;
                    let c = moment / (4.0 * std::f64::consts::PI) * w * l * l * (-two_h * l).exp() / rho;
                    (l, c)
                })
                .collect()
        };
        let total: f64 = full.iter().map(|p| p.1.abs()).sum();
        full.into_iter()
            .filter(|p| p.1.abs() > 1e-14 * total)
            .unzip()
    }

    pub fn system(&self) -> &AemSystem {
        &self.system
    }

    /// Number of Hankel abscissae kept after pruning.
    pub fn hankel_points(&self) -> usize {
        self.lambdas.len()
    }

    /// Every frequency at which the kernel is evaluated.
    pub fn frequency_grid(&self) -> FrequencyGrid {
        let mut w: Vec<f64> = self.grids.iter().flat_map(|g| g.omegas.iter().copied()).collect();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        FrequencyGrid { omegas: w }
    }

    /// Secondary `Hz` (A/m) at the receiver for one angular frequency.
    pub fn frequency_response(&self, profile: &EarthProfile, omega: f64) -> Complex64 {
        let k2 = kernel::segment_admittances(profile, omega);
        let thick = profile.thicknesses();
        self.lambdas
            .iter()
            .zip(&self.coefs)
            .map(|(&l, &c)| c * kernel::reflection(l, &k2, &thick))
            .sum()
    }

    /// Step-off `-dBz/dt` (T/s) at the lagged times (ascending).
    pub fn step_response_samples(&self, profile: &EarthProfile) -> (Vec<f64>, Vec<f64>) {
        let per_grid: Vec<Vec<f64>> = self
            .grids
            .iter()
            .map(|g| {
                let h_im: Vec<f64> = g
                    .omegas
                    .iter()
                    .map(|&w| self.frequency_response(profile, w).im)
                    .collect();
                g.transform(&h_im)
            })
            .collect();
        let vals = self.order.iter().map(|&(g, j)| per_grid[g][j]).collect();
        (self.times.clone(), vals)
    }

    /// Gate responses (pT/s) for a merged profile.
    pub fn profile_response(&self, profile: &EarthProfile) -> Result<ResponseVector> {
        let (times, s) = self.step_response_samples(profile);
        let v: Vec<f64> = times.iter().zip(&s).map(|(t, s)| s * t * t).collect();
        let values: Vec<f64> = self
            .gate_matrix
            .iter()
            .map(|row| 1e12 * row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        if let Some(gate) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteResponse { gate });
        }
        Ok(ResponseVector { values })
    }

    pub fn response(&self, state: &ParticleState) -> Result<ResponseVector> {
        self.profile_response(&merge_profiles(state))
    }
}

/// One-shot forward evaluation. Prefer [`ForwardEngine`] when evaluating
/// many states for the same system.
pub fn forward(state: &ParticleState, system: &AemSystem) -> Result<ResponseVector> {
    ForwardEngine::new(system)?.response(state)
}
