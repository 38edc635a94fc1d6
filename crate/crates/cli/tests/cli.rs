use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semispec_cli::output::read_spectrum;

fn semispec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semispec")).args(args).output().expect("binary runs")
}

fn harmonic_config(dir: &Path, method: &str, steps: usize, trajectories: usize) -> PathBuf {
    let text = format!(
        "# 1D oscillator, reference state one quantum off center\n\
         [model]\nsystem = \"harmonic\"\nmass = 1.0\nomega = 1.0\n\n\
         [sampling]\nn_trajectories = {trajectories}\nseed = 11\n\n\
         [propagation]\ndt = 0.05\nn_steps = {steps}\n\n\
         [run]\nmethod = \"{method}\"\n"
    );
    let p = dir.join(format!("{method}.toml"));
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(args: &[&str]) -> String {
    let out = semispec(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn oracle_run_is_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harmonic_config(dir.path(), "oracle-tgwd", 64, 1);
    let out = dir.path().join("oracle.csv");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let s = read_spectrum(&out).unwrap();
    let mut w = (-0.5f64).exp();
    for k in 0..10 {
        assert_eq!(s.energies[k], k as f64 + 0.5);
        assert!((s.intensities[k] - w).abs() <= 1e-16 * w.max(1e-300) * 4.0);
        w *= 0.5 / (k + 1) as f64;
    }
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# method = oracle-tgwd\n"));
    assert!(text.contains("# bath_convention = "));
    assert!(text.contains("# config.propagation.n_steps = 64"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harmonic_config(dir.path(), "hk-sep", 256, 64);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["run", "--config", cfg, "--threads", "1", "--out", a.to_str().unwrap()]);
    run_ok(&["run", "--config", cfg, "--threads", "1", "--out", b.to_str().unwrap()]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(a.with_file_name("a.peaks.csv")).unwrap(), fs::read(b.with_file_name("b.peaks.csv")).unwrap());
    assert!(fs::read_to_string(a.with_file_name("a.meta.csv")).unwrap().contains("wall_time_s"));

    run_ok(&["run", "--config", cfg, "--threads", "3", "--out", c.to_str().unwrap()]);
    let (sa, sc) = (read_spectrum(&a).unwrap(), read_spectrum(&c).unwrap());
    for (x, y) in sa.intensities.iter().zip(&sc.intensities) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
    }

    let other = dir.path().join("d.csv");
    run_ok(&["run", "--config", cfg, "--seed", "12", "--threads", "1", "--out", other.to_str().unwrap()]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn compare_with_itself_and_with_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let sep = dir.path().join("sep.csv");
    let cfg = harmonic_config(dir.path(), "hk-sep", 512, 4000);
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", sep.to_str().unwrap()]);
    let report = run_ok(&["compare", sep.to_str().unwrap(), sep.to_str().unwrap(), "--tol-bins", "0"]);
    assert!(report.contains("# result = match"), "{report}");

    let oracle = dir.path().join("oracle.csv");
    run_ok(&["oracle", "harmonic", "--levels", "12", "--out", oracle.to_str().unwrap()]);
    let out = semispec(&[
        "compare",
        oracle.to_str().unwrap(),
        sep.to_str().unwrap(),
        "--tol-bins",
        "1",
        "--prominence",
        "0.01",
    ]);
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{report}");
    let rows: Vec<&str> = report.lines().filter(|l| l.ends_with(",ok")).collect();
    assert!(rows.len() >= 4, "{report}");
}

#[test]
fn compare_reports_mismatch_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(&["oracle", "harmonic", "--out", a.to_str().unwrap()]);
    run_ok(&["oracle", "harmonic", "--omega", "1.1", "--out", b.to_str().unwrap()]);
    let cfg = harmonic_config(dir.path(), "mixed-sep", 256, 1);
    let grid = dir.path().join("grid.csv");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", grid.to_str().unwrap()]);
    let out = semispec(&["compare", b.to_str().unwrap(), grid.to_str().unwrap(), "--tol-bins", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mismatch"));
}

#[test]
fn bad_configs_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = semispec(&["run", "--config", empty.to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for s in ["[model]", "[sampling]", "[propagation]", "[run]"] {
        assert!(err.contains(s), "{err}");
    }
    let cfg = harmonic_config(dir.path(), "hk-sep", 64, 4);
    let out = semispec(&["run", "--config", cfg.to_str().unwrap(), "--method", "nope", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mixed-sep"));
}

#[test]
fn methods_are_listed() {
    let out = run_ok(&["methods"]);
    for m in ["hk-sep", "hk-full", "mixed", "mixed-sep", "qm", "oracle-tgwd", "oracle-hybrid"] {
        assert!(out.lines().any(|l| l.starts_with(m)), "{out}");
    }
}

#[test]
fn morse_oracle_lists_levels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("morse.csv");
    run_ok(&["oracle", "morse", "--levels", "3", "--out", p.to_str().unwrap()]);
    let s = read_spectrum(&p).unwrap();
    assert_eq!(s.energies.len(), 4);
    assert!((s.energies[0] - 4.8516e-4).abs() < 1e-8);
    let out = semispec(&["oracle", "morse", "--levels", "200", "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            semispec_cli::commands::load_config(&path, &Default::default())
                .unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);

    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h.csv");
    run_ok(&["run", "--config", dir.join("harmonic.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let spec = read_spectrum(&out).unwrap();
    for k in 0..3 {
        let e = k as f64 + 0.5;
        assert!((spec.peak_near(e, 3).unwrap().energy - e).abs() < spec.bin_width());
    }
}
