use std::path::PathBuf;
use std::process::ExitCode;

use aipdetect_cli::commands::{self, ToyTarget};
use aipdetect_cli::{CliError, CliResult, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aipdetect", version, about = "Bayesian detection of induced polarisation in airborne EM soundings")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Particle count, overriding the configuration.
    #[arg(long, global = true)]
    particles: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true, env = "AIPDETECT_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the synthetic study grid of the configuration.
    Simulate,
    /// Invert one sounding, or a built-in analytic target.
    Invert {
        /// Sounding file (with its `.gates.csv` sidecar).
        data: Option<PathBuf>,
        /// Row of the sounding file to invert.
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Analytic target that bypasses the forward model: nested or conjugate.
        #[arg(long)]
        toy_target: Option<ToyTarget>,
    },
    /// Invert every decimated sounding of a survey line.
    DetectLine { data: PathBuf },
    /// Report on an inversion artifact directory.
    Summarize { dir: PathBuf },
    /// Write the Hankel and Fourier filter tables.
    DumpFilters,
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.sampler.seed = s;
    }
    if let Some(n) = cli.particles {
        cfg.sampler.n_particles = n;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Summarize { dir } = &cli.command {
        let out = if cli.out_dir == PathBuf::from("out") { dir.clone() } else { cli.out_dir.clone() };
        print!("{}", commands::write_report(dir, &out)?);
        return Ok(());
    }
    let cfg = load(&cli)?;
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = cli.out_dir.clone();
    commands::with_workers(workers, || match &cli.command {
        Command::Simulate => {
            let files = commands::cmd_simulate(&cfg, cfg.sampler.seed, &out)?;
            println!("wrote {} soundings to {}", files.len(), out.display());
            Ok(())
        }
        Command::Invert { toy_target: Some(t), .. } => {
            let s = commands::cmd_invert_toy(&cfg, *t, &out)?;
            let (e, a) = (s.estimate.unwrap_or(f64::NAN), s.analytic.unwrap_or(f64::NAN));
            println!("estimate {e} analytic {a} -> {}", out.display());
            Ok(())
        }
        Command::Invert { data: Some(d), row, .. } => {
            let inv = commands::cmd_invert(&cfg, d, *row, &out)?;
            println!("log10 BFIPD {} -> {}", inv.bfipd.log10(), out.display());
            Ok(())
        }
        Command::Invert { data: None, .. } => Err(CliError::Config("invert needs a sounding file or --toy-target".into())),
        Command::DetectLine { data } => {
            let r = commands::cmd_detect_line(&cfg, data, &out)?;
            println!("inverted {} soundings -> {}", r.len(), out.display());
            Ok(())
        }
        Command::DumpFilters => commands::cmd_dump_filters(&out),
        Command::Summarize { .. } => unreachable!(),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
