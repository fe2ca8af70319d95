//! Columnar text formats.
//!
//! Soundings: `line_id,fiducial,x,y,elevation,g0..g{n-1}` with gate windows
//! in a sidecar `<file>.gates.csv` (`gate,start,end`, seconds). Clouds: one
//! particle per row, `kappa,lambda,phi_b,phi_1..,z_sigma_1..,m_1..,z_m_1..,tau,c,log_like,log_weight`
//! with unused slots left empty. Numbers are written in shortest round-trip form.

use std::fs::File;
use std::path::{Path, PathBuf};

use aipdetect_core::{Gate, ModelIndex, ParticleState, PriorSpec, Sounding};

use crate::error::{CliError, CliResult};

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{what}: cannot parse '{s}' as a number")))
}

pub fn gates_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".gates.csv");
    PathBuf::from(s)
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_soundings(path: &Path, gates: &[Gate], soundings: &[Sounding]) -> CliResult<()> {
    let mut w = writer(&gates_path(path))?;
    w.write_record(["gate", "start", "end"])?;
    for (i, g) in gates.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(g.start), fmt_f64(g.end)])?;
    }
    w.flush()?;

    let mut w = writer(path)?;
    let mut header: Vec<String> = ["line_id", "fiducial", "x", "y", "elevation"].map(String::from).to_vec();
    header.extend((0..gates.len()).map(|i| format!("g{i}")));
    w.write_record(&header)?;
    for s in soundings {
        if s.y.len() != gates.len() {
            return Err(CliError::Config(format!(
                "sounding {} has {} values for {} gates",
                s.fiducial,
                s.y.len(),
                gates.len()
            )));
        }
        let mut row = vec![s.line_id.clone(), fmt_f64(s.fiducial)];
        row.extend(s.location.iter().map(|&v| fmt_f64(v)));
        row.extend(s.y.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gates(path: &Path) -> CliResult<Vec<Gate>> {
    let mut r = reader(path)?;
    let mut gates = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(CliError::Config(format!("{}: row {i} needs gate,start,end", path.display())));
        }
        gates.push(Gate {
            start: parse_f64(&rec[1], "gate start")?,
            end: parse_f64(&rec[2], "gate end")?,
        });
    }
    if gates.is_empty() {
        return Err(CliError::Config(format!("{}: no gates", path.display())));
    }
    Ok(gates)
}

/// Soundings of a data file and the gate schedule from its sidecar.
pub fn read_soundings(path: &Path) -> CliResult<(Vec<Gate>, Vec<Sounding>)> {
    let gp = gates_path(path);
    if !gp.exists() {
        return Err(CliError::Config(format!("missing gate sidecar {}", gp.display())));
    }
    let gates = read_gates(&gp)?;
    let mut r = reader(path)?;
    let width = r.headers()?.len();
    if width != 5 + gates.len() {
        return Err(CliError::Config(format!(
            "{}: {} columns, expected 5 metadata columns and {} gates",
            path.display(),
            width,
            gates.len()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |j: usize| parse_f64(&rec[j], "sounding");
        let y = (5..width).map(num).collect::<CliResult<Vec<f64>>>()?;
        out.push(Sounding {
            y,
            location: [num(2)?, num(3)?, num(4)?],
            line_id: rec[0].to_string(),
            fiducial: num(1)?,
        });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("{}: no soundings", path.display())));
    }
    Ok((gates, out))
}

pub fn cloud_header(prior: &PriorSpec) -> Vec<String> {
    let (k, l) = (prior.kappa_max, prior.lambda_max);
    let mut h: Vec<String> = vec!["kappa".into(), "lambda".into(), "phi_b".into()];
    h.extend((1..=k).map(|i| format!("phi_{i}")));
    h.extend((1..=k).map(|i| format!("z_sigma_{i}")));
    h.extend((1..=l).map(|i| format!("m_{i}")));
    h.extend((1..=l).map(|i| format!("z_m_{i}")));
    h.extend(["tau", "c", "log_like", "log_weight"].map(String::from));
    h
}

fn padded(values: &[f64], width: usize) -> impl Iterator<Item = String> + '_ {
    (0..width).map(move |i| values.get(i).map(|&v| fmt_f64(v)).unwrap_or_default())
}

/// One row per particle; `log_weight` is the normalised log weight.
pub fn write_cloud(
    path: &Path,
    prior: &PriorSpec,
    particles: &[(ParticleState, f64, f64)],
) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(cloud_header(prior))?;
    let (k, l) = (prior.kappa_max, prior.lambda_max);
    for (s, log_like, log_w) in particles {
        let mk = s.model();
        let mut row = vec![mk.kappa.to_string(), mk.lambda.to_string(), fmt_f64(s.phi_b)];
        row.extend(padded(&s.phi, k));
        row.extend(padded(&s.z_sigma, k));
        row.extend(padded(&s.m, l));
        row.extend(padded(&s.z_m, l));
        row.extend([s.tau, s.c, *log_like, *log_w].map(fmt_f64));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud(path: &Path, prior: &PriorSpec) -> CliResult<Vec<(ParticleState, f64, f64)>> {
    let mut r = reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != cloud_header(prior) {
        return Err(CliError::Config(format!("{}: header does not match the prior", path.display())));
    }
    let (kmax, lmax) = (prior.kappa_max, prior.lambda_max);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let int = |j: usize| -> CliResult<usize> {
            rec[j].parse().map_err(|_| CliError::Config(format!("bad model index '{}'", &rec[j])))
        };
        let k = ModelIndex::new(int(0)?, int(1)?);
        if !prior.contains_model(k) {
            return Err(CliError::Config(format!("model {k:?} outside the prior")));
        }
        let num = |j: usize| parse_f64(&rec[j], "cloud");
        let block = |start: usize, n: usize| (start..start + n).map(num).collect::<CliResult<Vec<f64>>>();
        let phi_b = num(2)?;
        let phi = block(3, k.kappa)?;
        let z_sigma = block(3 + kmax, k.kappa)?;
        let m = block(3 + 2 * kmax, k.lambda)?;
        let z_m = block(3 + 2 * kmax + lmax, k.lambda)?;
        let tail = 3 + 2 * kmax + 2 * lmax;
        let state = ParticleState {
            phi_b,
            phi,
            z_sigma,
            m,
            z_m,
            tau: num(tail)?,
            c: num(tail + 1)?,
        };
        out.push((state, num(tail + 2)?, num(tail + 3)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aipdetect_core::model::sample_prior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, -0.0, 1.0, 0.1 + 0.2, 1e-300, -3.7e-12, 6.02e23, 12345.678, f64::MIN_POSITIVE] {
            assert_eq!(parse_f64(&fmt_f64(x), "x").unwrap().to_bits(), x.to_bits());
        }
        assert!(parse_f64(&fmt_f64(f64::NAN), "x").unwrap().is_nan());
        assert_eq!(parse_f64(&fmt_f64(f64::NEG_INFINITY), "x").unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn soundings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("line.csv");
        let gates = aipdetect_core::forward::log_spaced_gates(1e-5, 1e-2, 4);
        let s = Sounding {
            y: vec![1.5, -2e-7, 0.1 + 0.2, 1e9],
            location: [1.0, 2.5, -3.0],
            line_id: "L100".into(),
            fiducial: 7.25,
        };
        write_soundings(&path, &gates, &[s.clone(), s.clone()]).unwrap();
        let (g, back) = read_soundings(&path).unwrap();
        assert_eq!(g, gates);
        assert_eq!(back, vec![s.clone(), s]);
    }

    #[test]
    fn cloud_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let prior = PriorSpec { kappa_max: 3, lambda_max: 2, ..PriorSpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cloud: Vec<_> = (0..50)
            .map(|i| (sample_prior(&prior, &mut rng), -(i as f64) / 3.0, -(50f64).ln()))
            .collect();
        write_cloud(&path, &prior, &cloud).unwrap();
        assert_eq!(read_cloud(&path, &prior).unwrap(), cloud);
    }

    #[test]
    fn missing_sidecar_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "line_id,fiducial,x,y,elevation,g0\nA,0,0,0,0,1\n").unwrap();
        let err = read_soundings(&path).unwrap_err();
        assert!(err.to_string().contains("gates.csv"));
    }
}
