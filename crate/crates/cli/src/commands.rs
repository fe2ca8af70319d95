//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use aipdetect_core::detect::{
    bfipd, depth_marginal_grid, depth_of_investigation, mean_profile, model_marginals, ppd_summary,
    BayesFactor, DepthGrid, ModelMarginals, PpdSummary,
};
use aipdetect_core::forward::filters::{FOURIER_BASE, FOURIER_COS, FOURIER_SIN, HANKEL_BASE, HANKEL_J0, HANKEL_J1};
use aipdetect_core::rjsmc::{run_rjsmc_with_observer, StepReport};
use aipdetect_core::rng::{child_seed, stream};
use aipdetect_core::smc::{run_static_smc, GaussianRandomWalk, SmcConfig};
use aipdetect_core::toy::{ConjugateGaussian, NestedGaussian};
use aipdetect_core::{
    AemLikelihood, AemSystem, ForwardEngine, Gate, ModelIndex, ParticleState,
    PriorSpec, Profile, RjsmcOutput, Sounding,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, StudySpec};
use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, parse_f64, read_soundings, write_cloud, write_soundings};

const PHASE_SIMULATE: u64 = 16;
const PHASE_PPD: u64 = 17;

/// Files every inversion writes.
pub const BASE_ARTIFACTS: [&str; 3] = ["summary.json", "evidence.csv", "model_marginals.csv"];
/// Files written only by AEM inversions.
pub const AEM_ARTIFACTS: [&str; 5] = [
    "cloud.csv",
    "depth_conductivity.csv",
    "depth_chargeability.csv",
    "ppd.csv",
    "diagnostics.jsonl",
];

/// Runs `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- simulate

/// One case of the synthetic study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCase {
    pub basement: f64,
    pub depth: f64,
    pub chargeability: f64,
}

/// Cases in file order: basement, then depth, then chargeability.
pub fn study_cases(study: &StudySpec) -> Vec<StudyCase> {
    let mut out = Vec::new();
    for &basement in &study.basements {
        for &depth in &study.depths {
            for &chargeability in &study.chargeabilities {
                out.push(StudyCase { basement, depth, chargeability });
            }
        }
    }
    out
}

/// Top layer over a chargeable layer of fixed thickness over the basement.
/// A zero chargeability gives the non-chargeable model.
pub fn study_truth(study: &StudySpec, case: &StudyCase) -> ParticleState {
    let z = vec![case.depth, case.depth + study.layer_thickness];
    let (m, z_m) = if case.chargeability > 0.0 {
        (vec![case.chargeability, 0.0], z.clone())
    } else {
        (Vec::new(), Vec::new())
    };
    ParticleState {
        phi_b: study.top_sigma.log10(),
        phi: vec![study.layer_sigma.log10(), case.basement.log10()],
        z_sigma: z,
        m,
        z_m,
        tau: study.tau,
        c: study.c,
    }
}

/// Noisy sounding of a truth model with a seed-derived noise stream.
pub fn simulate_truth(cfg: &RunConfig, truth: &ParticleState, seed: u64, index: u64) -> CliResult<Sounding> {
    let engine = engine_for(cfg, &cfg.system)?;
    let noise = cfg.noise.model(cfg.system.gates.len())?;
    let mut rng = stream(seed, 0, PHASE_SIMULATE, index);
    aipdetect_core::simulate_sounding(truth, &engine, &noise, &mut rng)
        .map_err(|e| CliError::Sampler(format!("forward model failed: {e}")))
}

fn engine_for(cfg: &RunConfig, system: &AemSystem) -> CliResult<ForwardEngine> {
    ForwardEngine::with_options(system, cfg.forward).map_err(|e| CliError::Config(e.to_string()))
}

/// Writes one sounding file per study case and a `cases.csv` manifest.
pub fn cmd_simulate(cfg: &RunConfig, seed: u64, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let cases = study_cases(&cfg.study);
    let soundings: Vec<CliResult<Sounding>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let mut s = simulate_truth(cfg, &study_truth(&cfg.study, case), seed, i as u64)?;
            s.line_id = "study".into();
            s.fiducial = i as f64;
            Ok(s)
        })
        .collect();
    let mut manifest = csv::Writer::from_path(out_dir.join("cases.csv"))?;
    manifest.write_record(["case", "file", "basement", "depth", "chargeability", "tau", "c"])?;
    let mut files = Vec::new();
    for (i, (case, s)) in cases.iter().zip(soundings).enumerate() {
        let name = format!("case_{i:03}.csv");
        let path = out_dir.join(&name);
        write_soundings(&path, &cfg.system.gates, &[s?])?;
        manifest.write_record([
            i.to_string(),
            name,
            fmt_f64(case.basement),
            fmt_f64(case.depth),
            fmt_f64(case.chargeability),
            fmt_f64(cfg.study.tau),
            fmt_f64(cfg.study.c),
        ])?;
        files.push(path);
    }
    manifest.flush()?;
    Ok(files)
}

// ---------------------------------------------------------------- invert

/// Posterior summaries of one sounding.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub prior: PriorSpec,
    pub output: RjsmcOutput,
    pub states: Vec<ParticleState>,
    pub marginals: ModelMarginals,
    pub bfipd: BayesFactor,
    pub grid: DepthGrid,
    pub ppd: PpdSummary,
    pub gates: Vec<Gate>,
    pub sounding: Sounding,
    pub seed: u64,
}

/// Full inversion of one sounding. The data's gate schedule replaces the
/// configured one.
pub fn invert_sounding(cfg: &RunConfig, sounding: &Sounding, gates: &[Gate], seed: u64) -> CliResult<Inversion> {
    let system = AemSystem { gates: gates.to_vec(), ..cfg.system.clone() };
    system.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let engine = engine_for(cfg, &system)?;
    let noise = cfg.noise.model(gates.len())?;
    let like = AemLikelihood::new(engine, sounding.clone(), noise.clone())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let sampler = aipdetect_core::RjsmcConfig { seed, ..cfg.sampler.clone() };
    let output = run_rjsmc_with_observer(&like, &cfg.prior, &sampler, |r, _| {
        log::debug!("step {} gamma {:e} tess {:.1} R {}", r.step, r.gamma, r.tess, r.mutation_steps);
    })
    .map_err(|e| CliError::Sampler(e.to_string()))?;
    let states = output.states();
    let marginals = model_marginals(&states, &cfg.prior);
    let bf = bfipd(&marginals, &cfg.prior);
    let mut grid = depth_marginal_grid(&states, &cfg.prior);
    let (dc, dm) = depth_of_investigation(&grid, &cfg.prior, cfg.output.doi_threshold);
    grid.doi_cond = dc;
    grid.doi_charge = dm;
    let mut rng = stream(seed, 0, PHASE_PPD, 0);
    let ppd = ppd_summary(&states, &like.engine, &noise, sounding, cfg.output.ppd_draws, &mut rng)
        .map_err(|e| CliError::Sampler(format!("posterior predictive check failed: {e}")))?;
    Ok(Inversion {
        prior: cfg.prior.clone(),
        output,
        states,
        marginals,
        bfipd: bf,
        grid,
        ppd,
        gates: gates.to_vec(),
        sounding: sounding.clone(),
        seed,
    })
}

/// Contents of `summary.json`. Quantities that may be infinite or undefined
/// are stored as text so they survive JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub seed: u64,
    pub n_particles: usize,
    pub steps: usize,
    pub line_id: Option<String>,
    pub fiducial: Option<f64>,
    pub bfipd: String,
    pub log10_bfipd: String,
    pub bfipd_low_confidence: bool,
    pub chargeable_probability: f64,
    pub doi_conductivity: Option<f64>,
    pub doi_chargeability: Option<f64>,
    pub ppd_within_2: Option<f64>,
    pub ppd_failed_draws: Option<usize>,
    /// Closed-form log evidence or Bayes factor of a toy target.
    pub analytic: Option<f64>,
    pub estimate: Option<f64>,
}

fn write_evidence(dir: &Path, rows: &[(ModelIndex, f64, bool)]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("evidence.csv"))?;
    w.write_record(["kappa", "lambda", "log_z", "complete"])?;
    for (k, lz, complete) in rows {
        w.write_record([k.kappa.to_string(), k.lambda.to_string(), fmt_f64(*lz), complete.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_marginals(dir: &Path, m: &ModelMarginals) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("model_marginals.csv"))?;
    w.write_record(["kappa", "lambda", "count", "probability"])?;
    for &(k, p) in &m.probs {
        let count = (p * m.n_total as f64).round() as usize;
        w.write_record([k.kappa.to_string(), k.lambda.to_string(), count.to_string(), fmt_f64(p)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_diagnostics(dir: &Path, reports: &[StepReport]) -> CliResult<()> {
    let mut f = fs::File::create(dir.join("diagnostics.jsonl"))?;
    for r in reports {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn write_depth_grid(path: &Path, depths: &[f64], edges: &[f64], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["depth".to_string()];
    header.extend(edges.windows(2).map(|e| fmt_f64(0.5 * (e[0] + e[1]))));
    w.write_record(&header)?;
    for (z, row) in depths.iter().zip(rows) {
        let mut rec = vec![fmt_f64(*z)];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_ppd(dir: &Path, inv: &Inversion) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("ppd.csv"))?;
    w.write_record(["gate", "start", "end", "observed", "mean", "sd", "residual"])?;
    for (i, g) in inv.gates.iter().enumerate() {
        w.write_record([
            i.to_string(),
            fmt_f64(g.start),
            fmt_f64(g.end),
            fmt_f64(inv.sounding.y[i]),
            fmt_f64(inv.ppd.mean[i]),
            fmt_f64(inv.ppd.sd[i]),
            fmt_f64(inv.ppd.residual[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(dir: &Path, s: &Summary) -> CliResult<()> {
    write_text(&dir.join("summary.json"), &(serde_json::to_string_pretty(s)? + "\n"))
}

pub fn inversion_summary(inv: &Inversion) -> Summary {
    Summary {
        kind: "aem".into(),
        seed: inv.seed,
        n_particles: inv.states.len(),
        steps: inv.output.gammas.len() - 1,
        line_id: Some(inv.sounding.line_id.clone()),
        fiducial: Some(inv.sounding.fiducial),
        bfipd: fmt_f64(inv.bfipd.value),
        log10_bfipd: fmt_f64(inv.bfipd.log10()),
        bfipd_low_confidence: inv.bfipd.low_confidence,
        chargeable_probability: inv.marginals.chargeable_mass(),
        doi_conductivity: Some(inv.grid.doi_cond),
        doi_chargeability: Some(inv.grid.doi_charge),
        ppd_within_2: Some(inv.ppd.fraction_within(2.0)),
        ppd_failed_draws: Some(inv.ppd.failed),
        analytic: None,
        estimate: None,
    }
}

pub fn write_inversion(dir: &Path, inv: &Inversion) -> CliResult<()> {
    create_dir(dir)?;
    let lw = -(inv.output.particles.len() as f64).ln();
    let rows: Vec<(ParticleState, f64, f64)> =
        inv.output.particles.iter().map(|p| (p.state.clone(), p.log_like, lw)).collect();
    write_cloud(&dir.join("cloud.csv"), &inv.prior, &rows)?;
    let ev: Vec<_> = inv.output.evidence.iter().map(|e| (e.model, e.log_z, e.complete)).collect();
    write_evidence(dir, &ev)?;
    write_marginals(dir, &inv.marginals)?;
    write_depth_grid(&dir.join("depth_conductivity.csv"), &inv.grid.depths, &inv.grid.cond_edges, &inv.grid.cond_density)?;
    write_depth_grid(&dir.join("depth_chargeability.csv"), &inv.grid.depths, &inv.grid.charge_edges, &inv.grid.charge_density)?;
    write_ppd(dir, inv)?;
    write_diagnostics(dir, &inv.output.diagnostics)?;
    write_summary(dir, &inversion_summary(inv))
}

/// Built-in analytic targets that bypass the forward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyTarget {
    /// Two nested models with a closed-form Bayes factor, run by RJSMC.
    Nested,
    /// Conjugate Gaussian with a closed-form evidence, run by static SMC.
    Conjugate,
}

impl std::str::FromStr for ToyTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nested" => Ok(ToyTarget::Nested),
            "conjugate" => Ok(ToyTarget::Conjugate),
            _ => Err(format!("unknown toy target '{s}' (expected nested or conjugate)")),
        }
    }
}

pub fn cmd_invert_toy(cfg: &RunConfig, target: ToyTarget, out_dir: &Path) -> CliResult<Summary> {
    create_dir(out_dir)?;
    let seed = cfg.sampler.seed;
    let summary = match target {
        ToyTarget::Nested => {
            let toy = NestedGaussian::default();
            let prior = NestedGaussian::prior();
            let out = aipdetect_core::run_rjsmc(&toy, &prior, &cfg.sampler)
                .map_err(|e| CliError::Sampler(e.to_string()))?;
            let states = out.states();
            let m = model_marginals(&states, &prior);
            let bf = bfipd(&m, &prior);
            let lw = -(states.len() as f64).ln();
            let rows: Vec<_> = out.particles.iter().map(|p| (p.state.clone(), p.log_like, lw)).collect();
            write_cloud(&out_dir.join("cloud.csv"), &prior, &rows)?;
            let ev: Vec<_> = out.evidence.iter().map(|e| (e.model, e.log_z, e.complete)).collect();
            write_evidence(out_dir, &ev)?;
            write_marginals(out_dir, &m)?;
            write_diagnostics(out_dir, &out.diagnostics)?;
            let (k0, k1) = (ModelIndex::new(0, 0), ModelIndex::new(1, 0));
            Summary {
                kind: "nested".into(),
                seed,
                n_particles: states.len(),
                steps: out.gammas.len() - 1,
                line_id: None,
                fiducial: None,
                bfipd: fmt_f64(bf.value),
                log10_bfipd: fmt_f64(bf.log10()),
                bfipd_low_confidence: bf.low_confidence,
                chargeable_probability: m.chargeable_mass(),
                doi_conductivity: None,
                doi_chargeability: None,
                ppd_within_2: None,
                ppd_failed_draws: None,
                analytic: Some(toy.bayes_factor()),
                estimate: Some(m.prob(k1) / m.prob(k0)),
            }
        }
        ToyTarget::Conjugate => {
            let target = ConjugateGaussian { y: 1.0 };
            let smc = SmcConfig {
                n_particles: cfg.sampler.n_particles,
                seed,
                ..SmcConfig::default()
            };
            let out = run_static_smc(&target, &mut GaussianRandomWalk::optimal(1), &smc)
                .map_err(|e| CliError::Sampler(e.to_string()))?;
            let k0 = ModelIndex::new(0, 0);
            write_evidence(out_dir, &[(k0, out.log_z, true)])?;
            write_marginals(out_dir, &ModelMarginals { probs: vec![(k0, 1.0)], n_total: out.particles.len() })?;
            let mut f = fs::File::create(out_dir.join("diagnostics.jsonl"))?;
            for d in &out.diagnostics {
                writeln!(f, "{}", serde_json::to_string(d)?)?;
            }
            Summary {
                kind: "conjugate".into(),
                seed,
                n_particles: out.particles.len(),
                steps: out.gammas.len() - 1,
                line_id: None,
                fiducial: None,
                bfipd: fmt_f64(f64::NAN),
                log10_bfipd: fmt_f64(f64::NAN),
                bfipd_low_confidence: true,
                chargeable_probability: 0.0,
                doi_conductivity: None,
                doi_chargeability: None,
                ppd_within_2: None,
                ppd_failed_draws: None,
                analytic: Some(target.log_evidence()),
                estimate: Some(out.log_z),
            }
        }
    };
    write_summary(out_dir, &summary)?;
    Ok(summary)
}

/// Inverts row `row` of a sounding file.
pub fn cmd_invert(cfg: &RunConfig, data: &Path, row: usize, out_dir: &Path) -> CliResult<Inversion> {
    let (gates, soundings) = read_soundings(data)?;
    let s = soundings
        .get(row)
        .ok_or_else(|| CliError::Config(format!("{} has {} soundings; row {row} requested", data.display(), soundings.len())))?;
    let inv = invert_sounding(cfg, s, &gates, cfg.sampler.seed)?;
    write_inversion(out_dir, &inv)?;
    write_text(&out_dir.join("run_config.toml"), &cfg.to_toml())?;
    Ok(inv)
}

// ---------------------------------------------------------------- detect-line

/// Indices kept so consecutive soundings are at least `spacing` apart along
/// the line (horizontal distance). The first sounding is always kept.
pub fn decimate(soundings: &[Sounding], spacing: f64) -> Vec<usize> {
    let mut keep = Vec::new();
    let mut last: Option<[f64; 3]> = None;
    for (i, s) in soundings.iter().enumerate() {
        let far = match last {
            None => true,
            Some(p) => (s.location[0] - p[0]).hypot(s.location[1] - p[1]) >= spacing,
        };
        if far {
            keep.push(i);
            last = Some(s.location);
        }
    }
    keep
}

/// Outcome of one sounding of a line.
pub struct LineSounding {
    pub index: usize,
    pub sounding: Sounding,
    pub result: CliResult<Inversion>,
}

/// Inverts the decimated soundings of a line in parallel, each with seed
/// `child_seed(seed, index in file)`.
pub fn detect_line(cfg: &RunConfig, gates: &[Gate], soundings: &[Sounding], seed: u64) -> CliResult<Vec<LineSounding>> {
    if soundings.windows(2).any(|w| w[1].fiducial <= w[0].fiducial) {
        return Err(CliError::Config("line soundings must have ascending fiducials".into()));
    }
    let keep = decimate(soundings, cfg.line.decimation);
    Ok(keep
        .par_iter()
        .map(|&i| {
            let s = &soundings[i];
            let result = invert_sounding(cfg, s, gates, child_seed(seed, i as u64));
            if let Err(e) = &result {
                log::warn!("sounding {} (fiducial {}) failed: {e}", i, s.fiducial);
            }
            LineSounding { index: i, sounding: s.clone(), result }
        })
        .collect())
}

pub fn write_line(dir: &Path, prior: &PriorSpec, results: &[LineSounding]) -> CliResult<()> {
    create_dir(dir)?;
    let depths: Vec<f64> = (0..=prior.z_max.floor() as usize).map(|d| d as f64).collect();
    let mut summary = csv::Writer::from_path(dir.join("line_summary.csv"))?;
    summary.write_record([
        "index",
        "line_id",
        "fiducial",
        "x",
        "y",
        "status",
        "bfipd",
        "log10_bfipd",
        "bfipd_low_confidence",
        "chargeable_probability",
        "doi_conductivity",
        "doi_chargeability",
        "ppd_within_2",
        "error",
    ])?;
    let mut cond = csv::Writer::from_path(dir.join("line_conductivity.csv"))?;
    cond.write_record(["index", "fiducial", "depth", "mean_log10_conductivity"])?;
    let mut charge = csv::Writer::from_path(dir.join("line_chargeability.csv"))?;
    charge.write_record(["index", "fiducial", "depth", "mean_chargeability"])?;
    let mut resid = csv::Writer::from_path(dir.join("line_residuals.csv"))?;
    resid.write_record(["index", "fiducial", "gate", "residual"])?;
    for r in results {
        let s = &r.sounding;
        let head = [r.index.to_string(), s.line_id.clone(), fmt_f64(s.fiducial), fmt_f64(s.location[0]), fmt_f64(s.location[1])];
        match &r.result {
            Ok(inv) => {
                let mut rec = head.to_vec();
                rec.extend([
                    "ok".into(),
                    fmt_f64(inv.bfipd.value),
                    fmt_f64(inv.bfipd.log10()),
                    inv.bfipd.low_confidence.to_string(),
                    fmt_f64(inv.marginals.chargeable_mass()),
                    fmt_f64(inv.grid.doi_cond),
                    fmt_f64(inv.grid.doi_charge),
                    fmt_f64(inv.ppd.fraction_within(2.0)),
                    String::new(),
                ]);
                summary.write_record(&rec)?;
                let fid = fmt_f64(s.fiducial);
                let mc = mean_profile(&inv.states, Profile::Conductive, &depths);
                let mm = mean_profile(&inv.states, Profile::Chargeable, &depths);
                for ((z, a), b) in depths.iter().zip(&mc).zip(&mm) {
                    cond.write_record([r.index.to_string(), fid.clone(), fmt_f64(*z), fmt_f64(*a)])?;
                    charge.write_record([r.index.to_string(), fid.clone(), fmt_f64(*z), fmt_f64(*b)])?;
                }
                for (g, v) in inv.ppd.residual.iter().enumerate() {
                    resid.write_record([r.index.to_string(), fid.clone(), g.to_string(), fmt_f64(*v)])?;
                }
            }
            Err(e) => {
                let mut rec = head.to_vec();
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.to_string());
                summary.write_record(&rec)?;
            }
        }
    }
    for w in [&mut summary, &mut cond, &mut charge, &mut resid] {
        w.flush()?;
    }
    Ok(())
}

/// Inverts a line file. Partial failures still write every table and then
/// return [`CliError::Partial`].
pub fn cmd_detect_line(cfg: &RunConfig, data: &Path, out_dir: &Path) -> CliResult<Vec<LineSounding>> {
    let (gates, soundings) = read_soundings(data)?;
    let results = detect_line(cfg, &gates, &soundings, cfg.sampler.seed)?;
    write_line(out_dir, &cfg.prior, &results)?;
    write_text(&out_dir.join("run_config.toml"), &cfg.to_toml())?;
    let failed = results.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        return Err(CliError::Partial(format!("{failed} of {} soundings failed", results.len())));
    }
    Ok(results)
}

// ---------------------------------------------------------------- summarize

/// Files an artifact directory must contain, given the summary's kind.
pub fn required_artifacts(kind: Option<&str>) -> Vec<&'static str> {
    let mut v = BASE_ARTIFACTS.to_vec();
    if kind.map_or(true, |k| k == "aem") {
        v.extend(AEM_ARTIFACTS);
    }
    v
}

/// Text and CSV report of an artifact directory.
pub fn cmd_summarize(dir: &Path) -> CliResult<(String, String)> {
    let summary: Option<Summary> = match fs::read_to_string(dir.join("summary.json")) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(|e| CliError::Config(format!("summary.json: {e}")))?),
        Err(_) => None,
    };
    let missing: Vec<&str> = required_artifacts(summary.as_ref().map(|s| s.kind.as_str()))
        .into_iter()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("{}: missing {}", dir.display(), missing.join(", "))));
    }
    let s = summary.expect("summary present");
    let mut text = String::new();
    let mut rows: Vec<[String; 3]> = Vec::new();
    let mut row = |a: &str, b: String, c: String| rows.push([a.into(), b, c]);

    writeln!(text, "Artifacts: {}", dir.display()).unwrap();
    writeln!(text, "Kind: {}  particles: {}  seed: {}  steps: {}", s.kind, s.n_particles, s.seed, s.steps).unwrap();
    if let (Some(l), Some(f)) = (&s.line_id, s.fiducial) {
        writeln!(text, "Sounding: line {l} fiducial {}", fmt_f64(f)).unwrap();
    }

    writeln!(text, "\nModel marginals (kappa lambda probability log_z):").unwrap();
    let mut evidence = std::collections::BTreeMap::new();
    let mut r = csv::Reader::from_path(dir.join("evidence.csv"))?;
    for rec in r.records() {
        let rec = rec?;
        evidence.insert((rec[0].to_string(), rec[1].to_string()), rec[2].to_string());
    }
    let mut r = csv::Reader::from_path(dir.join("model_marginals.csv"))?;
    for rec in r.records() {
        let rec = rec?;
        let p = parse_f64(&rec[3], "probability")?;
        if p == 0.0 {
            continue;
        }
        let lz = evidence.get(&(rec[0].to_string(), rec[1].to_string())).cloned().unwrap_or_default();
        writeln!(text, "  {:>2} {:>2}  {:<10} {}", &rec[0], &rec[1], &rec[3], lz).unwrap();
        row("model", format!("{}:{}", &rec[0], &rec[1]), rec[3].to_string());
    }

    let log_bf = parse_f64(&s.log10_bfipd, "log10_bfipd")?;
    let verdict = if log_bf.is_nan() {
        "undefined (no chargeable or no non-chargeable support)"
    } else if log_bf > 0.0 {
        "IP detectable"
    } else {
        "IP not detectable"
    };
    let caveat = if s.bfipd_low_confidence { " [low confidence]" } else { "" };
    writeln!(text, "\nBFIPD: {} (log10 {}) -> {verdict}{caveat}", s.bfipd, s.log10_bfipd).unwrap();
    row("bfipd", "value".into(), s.bfipd.clone());
    row("bfipd", "log10".into(), s.log10_bfipd.clone());
    row("bfipd", "verdict".into(), format!("{verdict}{caveat}"));

    if let (Some(a), Some(b)) = (s.doi_conductivity, s.doi_chargeability) {
        writeln!(text, "DOI: conductivity {} m, chargeability {} m", fmt_f64(a), fmt_f64(b)).unwrap();
        row("doi", "conductivity".into(), fmt_f64(a));
        row("doi", "chargeability".into(), fmt_f64(b));
    }
    if let (Some(a), Some(e)) = (s.analytic, s.estimate) {
        writeln!(text, "Toy target: estimate {} vs analytic {}", fmt_f64(e), fmt_f64(a)).unwrap();
        row("toy", "estimate".into(), fmt_f64(e));
        row("toy", "analytic".into(), fmt_f64(a));
    }

    if dir.join("ppd.csv").is_file() {
        writeln!(text, "\nPosterior predictive check (|residual| <= 2):").unwrap();
        let mut r = csv::Reader::from_path(dir.join("ppd.csv"))?;
        let (mut pass, mut total) = (0, 0);
        for rec in r.records() {
            let rec = rec?;
            let res = parse_f64(&rec[6], "residual")?;
            let ok = res.abs() <= 2.0;
            pass += ok as usize;
            total += 1;
            let verdict = if ok { "pass" } else { "FAIL" };
            writeln!(text, "  gate {:>2}  residual {:>8.3}  {verdict}", &rec[0], res).unwrap();
            row("ppd", format!("gate {}", &rec[0]), verdict.into());
        }
        writeln!(text, "  {pass}/{total} gates pass").unwrap();
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "item", "value"])?;
    for r in &rows {
        w.write_record(r)?;
    }
    let csv_text = String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok((text, csv_text))
}

pub fn write_report(dir: &Path, out_dir: &Path) -> CliResult<String> {
    let (text, csv_text) = cmd_summarize(dir)?;
    create_dir(out_dir)?;
    write_text(&out_dir.join("report.txt"), &text)?;
    write_text(&out_dir.join("report.csv"), &csv_text)?;
    Ok(text)
}

// ---------------------------------------------------------------- dump-filters

/// Writes the digital filter tables used by the forward model.
pub fn cmd_dump_filters(out_dir: &Path) -> CliResult<()> {
    create_dir(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("hankel_filter.csv"))?;
    w.write_record(["index", "base", "j0", "j1"])?;
    for i in 0..HANKEL_BASE.len() {
        w.write_record([i.to_string(), fmt_f64(HANKEL_BASE[i]), fmt_f64(HANKEL_J0[i]), fmt_f64(HANKEL_J1[i])])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out_dir.join("fourier_filter.csv"))?;
    w.write_record(["index", "base", "sin", "cos"])?;
    for i in 0..FOURIER_BASE.len() {
        w.write_record([i.to_string(), fmt_f64(FOURIER_BASE[i]), fmt_f64(FOURIER_SIN[i]), fmt_f64(FOURIER_COS[i])])?;
    }
    w.flush()?;
    Ok(())
}
