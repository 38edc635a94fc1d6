//! Run configuration files.
//!
//! A config is TOML with four required sections and one optional one:
//!
//! ```toml
//! [model]
//! system = "morse"        # or "harmonic"
//! bath_modes = 1
//! omega_c = 0.1           # multiples of the system frequency
//! eta_eff = 0.2
//!
//! [sampling]
//! n_trajectories = 1000
//! seed = 7
//!
//! [propagation]
//! dt = 0.05               # fraction of the system period
//! n_steps = 4096
//!
//! [run]
//! method = "mixed-sep"
//! output = "spectrum.csv"
//!
//! [quantum]               # optional, qm only
//! points = [512, 128]
//! extent = [[-0.6, 1.2], [-1000.0, 1000.0]]
//! ```
//!
//! Every omitted key takes the default documented on its field.

use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use semispec_core::dynamics::{PropagationConfig, Scheme};
use semispec_core::methods::{MethodRegistry, PartitionChoice, RunSettings};
use semispec_core::model::{discretize_bath, BathSpec, ModelSpec, MorseParams, SystemPotential};
use semispec_core::quantum::{GridAxis, GridSpec, MAX_DIM};
use semispec_core::spectrum::{TransformOptions, Window};

pub const SECTIONS: [&str; 4] = ["model", "sampling", "propagation", "run"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sampling: SamplingSection,
    pub propagation: PropagationSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<QuantumSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    #[default]
    Morse,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `morse` (default) or `harmonic`.
    #[serde(default)]
    pub system: SystemKind,
    /// Morse well depth; default 0.057.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de: Option<f64>,
    /// Morse equilibrium distance; default 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<f64>,
    /// Morse range parameter; default 0.983.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// System mass; default 1.165e5 (Morse) or 1 (harmonic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Harmonic frequency in atomic units; default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Harmonic equilibrium position; default 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Number of bath oscillators; default 0.
    #[serde(default, alias = "F_bath")]
    pub bath_modes: usize,
    /// Bath cutoff as a multiple of the system frequency; default 1.
    #[serde(default = "one")]
    pub omega_c: f64,
    /// Effective coupling strength; default 0.
    #[serde(default)]
    pub eta_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(alias = "nTrajectories")]
    pub n_trajectories: usize,
    /// Default 0.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    /// Time step as a fraction of the system period; default 1/20.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Default 2^14, or 2^13 for the double-time methods.
    #[serde(default, alias = "nSteps", skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Integrator substeps per output step; default 2.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// `yoshida4` (default) or `verlet`.
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// `none` or `hann`; default `hann` for qm and `none` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    /// Zero-padding factor; default 1.
    #[serde(default = "default_pad")]
    pub pad: usize,
    /// Worker threads, 0 for all cores; default 0.
    #[serde(default)]
    pub threads: usize,
    /// `auto` (default), `system-bath` or `all-thawed`.
    #[serde(default = "default_partition")]
    pub partition: String,
    /// Subtract the bath zero-point energy from the energy axis; default false.
    #[serde(default)]
    pub shift_zpe: bool,
    /// Peak prominence threshold as a fraction of the maximum; default 1e-3.
    #[serde(default = "default_prominence")]
    pub prominence: f64,
    /// Highest level per mode in oracle combs; default 20.
    #[serde(default = "default_levels")]
    pub oracle_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumSection {
    pub points: Vec<usize>,
    /// `[min, max]` per degree of freedom, atomic units.
    pub extent: Vec<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.05
}
fn default_substeps() -> usize {
    2
}
fn default_scheme() -> String {
    "yoshida4".into()
}
fn default_pad() -> usize {
    1
}
fn default_partition() -> String {
    "auto".into()
}
fn default_prominence() -> f64 {
    1e-3
}
fn default_levels() -> usize {
    20
}

/// Parses and validates a config. Syntax and type errors carry line numbers.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    let missing: Vec<String> = SECTIONS.iter().filter(|s| !table.contains_key(**s)).map(|s| format!("[{s}]")).collect();
    if !missing.is_empty() {
        bail!("missing required sections: {}", missing.join(", "));
    }
    let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn validate(&self) -> Result<()> {
        let registry = MethodRegistry::default();
        registry.get(&self.run.method)?;
        if self.sampling.n_trajectories == 0 {
            bail!("[sampling] n_trajectories must be at least 1");
        }
        let m = &self.model;
        let irrelevant: &[(&str, bool)] = match m.system {
            SystemKind::Morse => &[("omega", m.omega.is_some()), ("center", m.center.is_some())],
            SystemKind::Harmonic => &[("de", m.de.is_some()), ("re", m.re.is_some()), ("alpha", m.alpha.is_some())],
        };
        if let Some((key, _)) = irrelevant.iter().find(|(_, set)| *set) {
            bail!("[model] key `{key}` does not apply to a {:?} system", m.system);
        }
        if !(self.propagation.dt > 0.0) {
            bail!("[propagation] dt must be positive");
        }
        if Scheme::parse(&self.propagation.scheme).is_none() {
            bail!("[propagation] unknown scheme `{}` (yoshida4, verlet)", self.propagation.scheme);
        }
        if let Some(w) = &self.run.window {
            if Window::parse(w).is_none() {
                bail!("[run] unknown window `{w}` (none, hann)");
            }
        }
        if PartitionChoice::parse(&self.run.partition).is_none() {
            bail!("[run] unknown partition `{}` (auto, system-bath, all-thawed)", self.run.partition);
        }
        if !(self.run.prominence > 0.0 && self.run.prominence < 1.0) {
            bail!("[run] prominence must lie in (0, 1)");
        }
        let dim = 1 + m.bath_modes;
        if self.run.method == "qm" && dim > MAX_DIM {
            bail!("method qm needs at most {MAX_DIM} degrees of freedom, the model has {dim}");
        }
        if let Some(q) = &self.quantum {
            if q.points.len() != dim || q.extent.len() != dim {
                bail!("[quantum] needs {dim} entries in points and extent");
            }
        }
        self.model()?;
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let system = match m.system {
            SystemKind::Morse => {
                let d = MorseParams::iodine();
                SystemPotential::Morse(MorseParams::new(
                    m.de.unwrap_or(d.de),
                    m.re.unwrap_or(d.re),
                    m.alpha.unwrap_or(d.alpha),
                    m.mass.unwrap_or(d.mass),
                )?)
            }
            SystemKind::Harmonic => {
                let mut s = SystemPotential::harmonic(m.mass.unwrap_or(1.0), m.omega.unwrap_or(1.0))?;
                if let SystemPotential::Harmonic(h) = &mut s {
                    h.center = m.center.unwrap_or(0.0);
                }
                s
            }
        };
        let bath = if m.bath_modes == 0 {
            BathSpec::none()
        } else {
            discretize_bath(m.bath_modes, m.omega_c * system.omega(), m.eta_eff, &system)?
        };
        Ok(ModelSpec::new(system, bath)?)
    }

    /// Steps after applying the per-method default.
    pub fn n_steps(&self) -> usize {
        self.propagation.n_steps.unwrap_or(match self.run.method.as_str() {
            "mixed" | "hk-full" => 1 << 13,
            _ => 1 << 14,
        })
    }

    /// Fills every defaulted optional so the serialized form records it.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut c = self.clone();
        let model = self.model()?;
        match &model.system {
            SystemPotential::Morse(p) => {
                c.model.de = Some(p.de);
                c.model.re = Some(p.re);
                c.model.alpha = Some(p.alpha);
                c.model.mass = Some(p.mass);
            }
            SystemPotential::Harmonic(h) => {
                c.model.mass = Some(h.mass);
                c.model.omega = Some(h.omega);
                c.model.center = Some(h.center);
            }
        }
        c.propagation.n_steps = Some(self.n_steps());
        c.run.window = Some(self.window().name().to_string());
        Ok(c)
    }

    pub fn window(&self) -> Window {
        match &self.run.window {
            Some(w) => Window::parse(w).unwrap_or_default(),
            None if self.run.method == "qm" => Window::Hann,
            None => Window::None,
        }
    }

    pub fn settings(&self, model: &ModelSpec) -> Result<RunSettings> {
        let ts = 2.0 * PI / model.system.omega();
        let scheme = Scheme::parse(&self.propagation.scheme).ok_or_else(|| anyhow!("unknown scheme"))?;
        let prop = PropagationConfig::new(self.propagation.dt * ts, self.n_steps())
            .with_substeps(self.propagation.substeps)
            .with_scheme(scheme);
        prop.validate()?;
        let mut s = RunSettings::new(self.sampling.n_trajectories, self.sampling.seed, prop);
        s.transform = Some(TransformOptions { window: self.window(), pad: self.run.pad });
        s.threads = self.run.threads;
        s.partition = PartitionChoice::parse(&self.run.partition).unwrap_or_default();
        s.oracle_levels = self.run.oracle_levels;
        if let Some(q) = &self.quantum {
            let axes = q
                .points
                .iter()
                .zip(&q.extent)
                .map(|(&n, e)| GridAxis::new(e[0], e[1], n))
                .collect::<semispec_core::Result<Vec<_>>>()?;
            s.grid = Some(GridSpec::new(axes, prop.dt, prop.n_steps).with_substeps(prop.substeps).with_scheme(scheme));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RESONANT: &str = r#"
[model]
bath_modes = 1
omega_c = 1.0
eta_eff = 0.2

[sampling]
n_trajectories = 10000
seed = 1

[propagation]
dt = 0.05
n_steps = 16384

[run]
method = "mixed-sep"
output = "resonant.csv"
"#;

    #[test]
    fn resonant_case_parses() {
        let c = parse_config(RESONANT).unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.dim(), 2);
        assert!((m.bath.omega[0] - m.system.omega()).abs() < 1e-18);
        let s = c.settings(&m).unwrap();
        assert!((s.propagation.dt - 2.0 * PI / m.system.omega() / 20.0).abs() < 1e-9);
        assert_eq!(s.n_trajectories, 10000);
    }

    #[test]
    fn round_trip() {
        let c = parse_config(RESONANT).unwrap();
        assert_eq!(parse_config(&c.to_toml().unwrap()).unwrap(), c);
        let r = c.resolved().unwrap();
        assert_eq!(parse_config(&r.to_toml().unwrap()).unwrap(), r);
    }

    #[test]
    fn empty_file_lists_every_section() {
        let e = parse_config("").unwrap_err().to_string();
        for s in SECTIONS {
            assert!(e.contains(&format!("[{s}]")), "{e}");
        }
    }

    #[test]
    fn negative_trajectories_is_an_error_with_a_line() {
        let bad = RESONANT.replace("n_trajectories = 10000", "n_trajectories = -1");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("line 8"), "{e}");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let bad = RESONANT.replace("seed = 1", "seeed = 1");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("seeed") && e.contains("line 9"), "{e}");
    }

    #[test]
    fn method_constraints() {
        let bad = RESONANT.replace("mixed-sep", "mixed-sepp");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("available"));
        let qm4 = RESONANT.replace("bath_modes = 1", "bath_modes = 3").replace("mixed-sep", "qm");
        assert!(parse_config(&qm4).is_err());
        let mixed = RESONANT.replace("n_steps = 16384\n", "").replace("mixed-sep", "mixed");
        assert_eq!(parse_config(&mixed).unwrap().n_steps(), 8192);
    }

    #[test]
    fn harmonic_rejects_morse_keys() {
        let text = "[model]\nsystem = \"harmonic\"\nde = 1.0\n[sampling]\nn_trajectories = 1\n[propagation]\n[run]\nmethod = \"hk-sep\"\n";
        assert!(parse_config(text).is_err());
        let ok = text.replace("de = 1.0\n", "mass = 1.0\nomega = 1.0\n");
        let c = parse_config(&ok).unwrap();
        assert_eq!(c.model().unwrap().system.omega(), 1.0);
        assert_eq!(c.window(), Window::None);
    }
}
