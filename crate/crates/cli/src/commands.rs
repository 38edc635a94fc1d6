use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use semispec_core::methods::MethodRegistry;
use semispec_core::model::{MorseParams, HBAR};
use semispec_core::oracle::{
    hybrid_sep_harmonic_weights, lines_to_spectrum, morse_eigenvalues, tgwd_harmonic_weights, HarmonicOracleParams,
};
use semispec_core::spectrum::{shift_energy, Spectrum};

use crate::compare::peaks_of;
use crate::config::{parse_config, RunConfig};
use crate::output::{sibling, write_peaks, write_spectrum};

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub steps: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = &self.method {
            cfg.run.method = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.sampling.seed = s;
        }
        if let Some(n) = self.trajectories {
            cfg.sampling.n_trajectories = n;
        }
        if let Some(n) = self.steps {
            cfg.propagation.n_steps = Some(n);
        }
        if let Some(t) = self.threads {
            cfg.run.threads = t;
        }
        if let Some(o) = &self.out {
            cfg.run.output = Some(o.clone());
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub spectrum: PathBuf,
    pub peaks: PathBuf,
    pub meta: PathBuf,
    pub warnings: Vec<String>,
    pub n_peaks: usize,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// `section.key = value` lines of the effective config, leaving out settings
/// that cannot change the spectrum.
fn config_entries(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let mut resolved = cfg.resolved()?;
    resolved.run.output = None;
    resolved.run.threads = 0;
    let value = toml::Value::try_from(resolved)?;
    let mut out = Vec::new();
    if let toml::Value::Table(t) = value {
        for (section, body) in t {
            if let toml::Value::Table(body) = body {
                for (k, v) in body {
                    if section == "run" && k == "threads" {
                        continue;
                    }
                    out.push((format!("config.{section}.{k}"), v.to_string()));
                }
            }
        }
    }
    Ok(out)
}

/// Runs the configured method and writes the spectrum, its peaks and a
/// `.meta` file with the wall time. The spectrum and peaks files depend only
/// on the config.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let out = cfg.run.output.clone().context("no output path: set [run] output or pass --out")?;
    let model = cfg.model()?;
    let settings = cfg.settings(&model)?;
    let registry = MethodRegistry::default();
    let method = registry.get(&cfg.run.method)?;

    let start = Instant::now();
    let mut spec = method.run(&model, &settings)?;
    let wall = start.elapsed();

    if cfg.run.shift_zpe {
        spec = shift_energy(spec, &model.bath)?;
    }
    let warnings: Vec<String> =
        spec.meta.extra.iter().filter(|(k, _)| k == "warning").map(|(_, v)| v.clone()).collect();
    let peaks = peaks_of(&spec, cfg.run.prominence)?;

    write_spectrum(&out, &spec, &config_entries(cfg)?)?;
    let peaks_path = sibling(&out, "peaks");
    write_peaks(&peaks_path, &spec, &peaks, cfg.run.prominence)?;
    let meta_path = sibling(&out, "meta");
    let threads = if cfg.run.threads == 0 { rayon::current_num_threads() } else { cfg.run.threads };
    fs::write(
        &meta_path,
        format!("method = {}\nwall_time_s = {:.6}\nthreads = {threads}\n", cfg.run.method, wall.as_secs_f64()),
    )
    .with_context(|| format!("writing {}", meta_path.display()))?;
    Ok(RunSummary { spectrum: out, peaks: peaks_path, meta: meta_path, warnings, n_peaks: peaks.len() })
}

/// Closed-form line lists for the `oracle` subcommand.
#[derive(Debug, Clone)]
pub enum OracleRequest {
    Harmonic { mass: f64, omega: f64, p0: f64, q0: f64, levels: usize, squared: bool },
    Morse { params: MorseParams, levels: usize },
}

pub fn oracle(req: &OracleRequest) -> Result<Spectrum> {
    Ok(match *req {
        OracleRequest::Harmonic { mass, omega, p0, q0, levels, squared } => {
            let p = HarmonicOracleParams::new(mass, omega, p0, q0)?;
            let (lines, name) = if squared {
                (hybrid_sep_harmonic_weights(&p, levels), "oracle-hybrid")
            } else {
                (tgwd_harmonic_weights(&p, levels), "oracle-tgwd")
            };
            let mut s = lines_to_spectrum(&lines, name);
            s.meta.push("lambda", p.lambda());
            s
        }
        OracleRequest::Morse { params, levels } => {
            let e = morse_eigenvalues(&params, levels)?;
            let lines: Vec<(f64, f64)> = e.into_iter().map(|e| (e, 1.0)).collect();
            let mut s = lines_to_spectrum(&lines, "oracle-morse");
            s.meta.push("omega", params.omega());
            s.meta.push("hbar", HBAR);
            s
        }
    })
}

pub fn write_oracle(req: &OracleRequest, out: &Path) -> Result<()> {
    let spec = oracle(req)?;
    write_spectrum(out, &spec, &[])
}
