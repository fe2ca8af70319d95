use std::path::Path;
use std::process::Command;

use aipdetect_cli::commands::{
    cmd_dump_filters, cmd_invert, cmd_invert_toy, cmd_simulate, cmd_summarize, decimate, detect_line, study_cases,
    with_workers, write_line, write_report, ToyTarget,
};
use aipdetect_cli::io::{read_soundings, write_soundings};
use aipdetect_cli::RunConfig;
use aipdetect_core::Sounding;

const BIN: &str = env!("CARGO_BIN_EXE_aipdetect");

/// Half-space-only model space with a light sampler, so AEM runs take seconds.
fn quick_config() -> RunConfig {
    RunConfig::from_toml(
        r#"
        [prior]
        kappa_max = 0
        lambda_max = 0
        [sampler]
        n_particles = 40
        max_mutation_steps = 3
        tune_rounds = 2
        seed = 5
        [output]
        ppd_draws = 20
        [study]
        basements = [0.001, 0.1]
        depths = [20.0]
        chargeabilities = [0.0, 0.8]
        "#,
    )
    .unwrap()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cfg = RunConfig::load(&root.join("default.toml")).unwrap();
    assert_eq!(cfg.sampler.n_particles, 9600);
    assert_eq!(cfg.prior.kappa_max, 9);
    let study = RunConfig::load(&root.join("detectability_study.toml")).unwrap();
    assert_eq!(study.study.basements, vec![0.001, 0.01, 0.032, 0.1]);
    assert_eq!(study_cases(&study.study).len(), 4 * 6 * 5);
}

#[test]
fn simulate_is_reproducible_and_non_chargeable_cases_stay_positive() {
    let cfg = quick_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files = cmd_simulate(&cfg, 9, a.path()).unwrap();
    assert_eq!(files.len(), 4);
    cmd_simulate(&cfg, 9, b.path()).unwrap();
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));
    // Case order is basement, depth, chargeability: case 0 is m = 0 over 0.001 S/m.
    let (_, s) = read_soundings(&files[0]).unwrap();
    assert!(s[0].y.iter().all(|&v| v > 0.0));
    let (_, s) = read_soundings(&files[1]).unwrap();
    assert!(s[0].y.iter().any(|&v| v < 0.0));
}

#[test]
fn toy_targets_recover_their_analytic_values() {
    let mut cfg = quick_config();
    cfg.sampler = Default::default();
    cfg.sampler.n_particles = 2000;
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_invert_toy(&cfg, ToyTarget::Conjugate, dir.path()).unwrap();
    assert!((s.estimate.unwrap() - s.analytic.unwrap()).abs() < 0.15);
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_invert_toy(&cfg, ToyTarget::Nested, dir.path()).unwrap();
    let (est, bf) = (s.estimate.unwrap(), s.analytic.unwrap());
    assert!((est / bf - 1.0).abs() < 0.3, "{est} vs {bf}");
    let (text, _) = cmd_summarize(dir.path()).unwrap();
    assert!(text.contains("undefined"), "{text}");
}

#[test]
fn single_model_inversion_reports_undefined_bfipd_and_summarizes() {
    let cfg = quick_config();
    let data = tempfile::tempdir().unwrap();
    let files = cmd_simulate(&cfg, 1, data.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let inv = cmd_invert(&cfg, &files[0], 0, out.path()).unwrap();
    assert!(inv.bfipd.value.is_nan());
    let text = write_report(out.path(), out.path()).unwrap();
    assert!(text.contains("undefined"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    let report = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
    let bf = summary["bfipd"].as_str().unwrap();
    assert!(report.contains(&format!("bfipd,value,{bf}")), "{report}");
    assert!(text.contains("gates pass"));
}

#[test]
fn summarize_lists_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_summarize(dir.path()).unwrap_err();
    let msg = err.to_string();
    for f in ["summary.json", "evidence.csv", "model_marginals.csv", "ppd.csv"] {
        assert!(msg.contains(f), "{msg}");
    }
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn decimation_keeps_soundings_at_the_requested_spacing() {
    let line: Vec<Sounding> = (0..100)
        .map(|i| Sounding {
            y: vec![1.0],
            location: [i as f64 * 6.0, 0.0, 0.0],
            line_id: "L".into(),
            fiducial: i as f64,
        })
        .collect();
    let keep = decimate(&line, 30.0);
    assert_eq!(keep[0], 0);
    for w in keep.windows(2) {
        assert_eq!(line[w[1]].location[0] - line[w[0]].location[0], 30.0);
    }
    assert_eq!(decimate(&line, 0.0).len(), 100);
    assert_eq!(decimate(&line[..1], 30.0), vec![0]);
}

#[test]
fn line_results_do_not_depend_on_worker_count() {
    let cfg = quick_config();
    let data = tempfile::tempdir().unwrap();
    let files = cmd_simulate(&cfg, 2, data.path()).unwrap();
    let (gates, _) = read_soundings(&files[0]).unwrap();
    let line: Vec<Sounding> = files[..3]
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut s = read_soundings(f).unwrap().1.remove(0);
            s.location = [40.0 * i as f64, 0.0, 0.0];
            s.fiducial = i as f64;
            s
        })
        .collect();
    let run = |workers| {
        let out = tempfile::tempdir().unwrap();
        let r = with_workers(workers, || detect_line(&cfg, &gates, &line, 11).unwrap()).unwrap();
        write_line(out.path(), &cfg.prior, &r).unwrap();
        read_dir_bytes(out.path())
    };
    let serial = run(1);
    assert_eq!(serial, run(3));
    let table = String::from_utf8(serial.iter().find(|f| f.0 == "line_summary.csv").unwrap().1.clone()).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sampler]\nn_particles = 0\n").unwrap();
    let code = |args: &[&str]| Command::new(BIN).args(args).output().unwrap().status.code();
    assert_eq!(code(&["--config", bad.to_str().unwrap(), "simulate"]), Some(1));
    assert_eq!(code(&["summarize", dir.path().to_str().unwrap()]), Some(1));
    let filters = dir.path().join("filters");
    assert_eq!(code(&["--out-dir", filters.to_str().unwrap(), "dump-filters"]), Some(0));
    assert!(filters.join("hankel_filter.csv").is_file());

    // A sounding with the wrong gate count for the sidecar is a config error.
    let data = dir.path().join("d.csv");
    let gates = aipdetect_core::forward::log_spaced_gates(1e-5, 1e-2, 3);
    write_soundings(&data, &gates, &[Sounding::new(vec![1.0, 2.0, 3.0])]).unwrap();
    std::fs::write(aipdetect_cli::io::gates_path(&data), "gate,start,end\n0,1e-5,2e-5\n").unwrap();
    assert_eq!(code(&["invert", data.to_str().unwrap()]), Some(1));
}

#[test]
fn toy_mode_through_the_binary_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let st = Command::new(BIN)
            .args(["--seed", "3", "--particles", "500", "--workers", workers, "--out-dir"])
            .arg(&out)
            .args(["invert", "--toy-target", "nested"])
            .output()
            .unwrap();
        assert!(st.status.success());
        read_dir_bytes(&out)
    };
    assert_eq!(run("a", "1"), run("b", "2"));
    let filters = tempfile::tempdir().unwrap();
    cmd_dump_filters(filters.path()).unwrap();
}
