//! Named spectrum methods behind one trait, looked up at run time.

use crate::dynamics::PropagationConfig;
use crate::ensemble::with_threads;
use crate::error::{invalid, Error, Result};
use crate::hybrid::{mixed_full_spectrum, mixed_sep_spectrum, Partition};
use crate::model::{ModelSpec, SystemPotential};
use crate::oracle::{
    hybrid_sep_harmonic_weights, lines_to_spectrum, product_comb, tgwd_harmonic_weights, HarmonicOracleParams, Line,
};
use crate::quantum::{self, GridSpec};
use crate::semiclassics::{hk_full_spectrum, hk_sep_spectrum, CoherentState, SamplerConfig};
use crate::spectrum::{Spectrum, TransformOptions};

/// How degrees of freedom are split between the Herman-Kluk and thawed
/// Gaussian treatments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionChoice {
    /// System in Herman-Kluk, bath thawed; a bath-free model is thawed whole.
    #[default]
    Auto,
    SystemBath,
    AllThawed,
}

impl PartitionChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::SystemBath => "system-bath",
            Self::AllThawed => "all-thawed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "system-bath" => Some(Self::SystemBath),
            "all-thawed" => Some(Self::AllThawed),
            _ => None,
        }
    }

    pub fn resolve(self, model: &ModelSpec) -> Partition {
        match self {
            Self::Auto if model.bath.count() == 0 => Partition::all_thawed(model),
            Self::Auto | Self::SystemBath => Partition::system_bath(model),
            Self::AllThawed => Partition::all_thawed(model),
        }
    }
}

/// Everything a method needs besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub n_trajectories: usize,
    pub seed: u64,
    pub propagation: PropagationConfig,
    /// `None` picks the method's own default.
    pub transform: Option<TransformOptions>,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub partition: PartitionChoice,
    /// Grid for `qm`; `None` builds the default grid.
    pub grid: Option<GridSpec>,
    /// Highest harmonic level kept by the oracle combs.
    pub oracle_levels: usize,
}

impl RunSettings {
    pub fn new(n_trajectories: usize, seed: u64, propagation: PropagationConfig) -> Self {
        Self {
            n_trajectories,
            seed,
            propagation,
            transform: None,
            threads: 0,
            partition: PartitionChoice::Auto,
            grid: None,
            oracle_levels: 20,
        }
    }

    fn transform_or_default(&self) -> TransformOptions {
        self.transform.unwrap_or_default()
    }
}

pub trait SpectrumMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn run(&self, model: &ModelSpec, settings: &RunSettings) -> Result<Spectrum>;
}

struct HkSep;
struct HkFull;
struct Mixed;
struct MixedSep;
struct Qm;
struct OracleTgwd;
struct OracleHybrid;

impl SpectrumMethod for HkSep {
    fn name(&self) -> &'static str {
        "hk-sep"
    }

    fn description(&self) -> &'static str {
        "separable time-averaged Herman-Kluk"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        let sampler = SamplerConfig::all(model, s.n_trajectories, s.seed);
        let chi = CoherentState::reference(model);
        with_threads(s.threads, || hk_sep_spectrum(model, &sampler, &s.propagation, &chi, &s.transform_or_default()))?
    }
}

impl SpectrumMethod for HkFull {
    fn name(&self) -> &'static str {
        "hk-full"
    }

    fn description(&self) -> &'static str {
        "time-averaged Herman-Kluk with the full prefactor"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        let sampler = SamplerConfig::all(model, s.n_trajectories, s.seed);
        let chi = CoherentState::reference(model);
        with_threads(s.threads, || hk_full_spectrum(model, &sampler, &s.propagation, &chi, &s.transform_or_default()))?
    }
}

impl SpectrumMethod for Mixed {
    fn name(&self) -> &'static str {
        "mixed"
    }

    fn description(&self) -> &'static str {
        "mixed Herman-Kluk / thawed Gaussian, double time integral"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        let part = s.partition.resolve(model);
        let chi = CoherentState::reference(model);
        let opts = s.transform_or_default();
        let mut spec = with_threads(s.threads, || {
            mixed_full_spectrum(model, &part, s.n_trajectories, s.seed, &s.propagation, &chi, &opts)
        })??;
        spec.meta.push("partition", s.partition.name());
        Ok(spec)
    }
}

impl SpectrumMethod for MixedSep {
    fn name(&self) -> &'static str {
        "mixed-sep"
    }

    fn description(&self) -> &'static str {
        "separable mixed Herman-Kluk / thawed Gaussian"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        let part = s.partition.resolve(model);
        let chi = CoherentState::reference(model);
        let opts = s.transform_or_default();
        let mut spec = with_threads(s.threads, || {
            mixed_sep_spectrum(model, &part, s.n_trajectories, s.seed, &s.propagation, &chi, &opts)
        })??;
        spec.meta.push("partition", s.partition.name());
        Ok(spec)
    }
}

impl SpectrumMethod for Qm {
    fn name(&self) -> &'static str {
        "qm"
    }

    fn description(&self) -> &'static str {
        "split-operator grid reference"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        let chi = CoherentState::reference(model);
        let p = &s.propagation;
        let grid = match &s.grid {
            Some(g) => g.clone(),
            None => {
                GridSpec::default_for(model, &chi, p.dt, p.n_steps)?.with_substeps(p.substeps).with_scheme(p.scheme)
            }
        };
        let opts = s.transform.unwrap_or_else(quantum::default_options);
        with_threads(s.threads, || quantum::qm_spectrum(model, &grid, &chi, &opts))?
    }
}

/// Harmonic parameters of every mode of an uncoupled harmonic model.
fn harmonic_modes(model: &ModelSpec) -> Result<Vec<HarmonicOracleParams>> {
    let SystemPotential::Harmonic(h) = model.system else {
        return Err(invalid("harmonic oracles need a harmonic system potential"));
    };
    if model.bath.coupling.iter().any(|&c| c != 0.0) {
        return Err(invalid("harmonic oracles need an uncoupled bath (eta_eff = 0)"));
    }
    let c = &model.ref_center;
    let mut modes = vec![HarmonicOracleParams::new(h.mass, h.omega, c.p[0], c.q[0] - h.center)?];
    for (i, &w) in model.bath.omega.iter().enumerate() {
        modes.push(HarmonicOracleParams::new(1.0, w, c.p[i + 1], c.q[i + 1])?);
    }
    Ok(modes)
}

fn oracle_lines(
    model: &ModelSpec,
    levels: usize,
    comb: fn(&HarmonicOracleParams, usize) -> Vec<Line>,
) -> Result<Vec<Line>> {
    let modes = harmonic_modes(model)?;
    let mut lines = vec![(0.0, 1.0)];
    for m in &modes {
        lines = product_comb(&lines, &comb(m, levels));
    }
    Ok(lines)
}

impl SpectrumMethod for OracleTgwd {
    fn name(&self) -> &'static str {
        "oracle-tgwd"
    }

    fn description(&self) -> &'static str {
        "closed-form thawed Gaussian comb for harmonic models"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        Ok(lines_to_spectrum(&oracle_lines(model, s.oracle_levels, tgwd_harmonic_weights)?, self.name()))
    }
}

impl SpectrumMethod for OracleHybrid {
    fn name(&self) -> &'static str {
        "oracle-hybrid"
    }

    fn description(&self) -> &'static str {
        "closed-form squared-weight comb of the separable mixed method"
    }

    fn run(&self, model: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        Ok(lines_to_spectrum(&oracle_lines(model, s.oracle_levels, hybrid_sep_harmonic_weights)?, self.name()))
    }
}

/// Methods by name.
pub struct MethodRegistry {
    methods: Vec<Box<dyn SpectrumMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(HkSep));
        r.register(Box::new(HkFull));
        r.register(Box::new(Mixed));
        r.register(Box::new(MixedSep));
        r.register(Box::new(Qm));
        r.register(Box::new(OracleTgwd));
        r.register(Box::new(OracleHybrid));
        r
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self { methods: Vec::new() }
    }

    /// Adds `method`, replacing any method with the same name.
    pub fn register(&mut self, method: Box<dyn SpectrumMethod>) {
        self.methods.retain(|m| m.name() != method.name());
        self.methods.push(method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SpectrumMethod> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownMethod { name: name.to_string(), available: self.names().join(", ") })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn SpectrumMethod> {
        self.methods.iter().map(|m| m.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BathSpec;
    use std::f64::consts::PI;

    fn oscillator() -> ModelSpec {
        ModelSpec::new(SystemPotential::harmonic(1.0, 1.0).unwrap(), BathSpec::none()).unwrap()
    }

    #[test]
    fn registry_knows_every_method() {
        let r = MethodRegistry::default();
        assert_eq!(r.names(), ["hk-sep", "hk-full", "mixed", "mixed-sep", "qm", "oracle-tgwd", "oracle-hybrid"]);
        for n in r.names() {
            assert_eq!(r.get(n).unwrap().name(), n);
        }
        match r.get("hk-sepp") {
            Err(Error::UnknownMethod { available, .. }) => assert!(available.contains("mixed-sep")),
            _ => panic!("expected an unknown-method error"),
        }
    }

    #[test]
    fn oracle_methods_give_closed_forms() {
        let r = MethodRegistry::default();
        let s = RunSettings::new(1, 1, PropagationConfig::new(0.1, 16));
        let t = r.get("oracle-tgwd").unwrap().run(&oscillator(), &s).unwrap();
        assert_eq!(t.energies[1], 1.5);
        assert!((t.intensities[1] / t.intensities[0] - 0.5).abs() < 1e-14);
        let h = r.get("oracle-hybrid").unwrap().run(&oscillator(), &s).unwrap();
        assert!((h.intensities[1] / h.intensities[0] - 0.25).abs() < 1e-14);
        let morse =
            ModelSpec::new(SystemPotential::Morse(crate::model::MorseParams::iodine()), BathSpec::none()).unwrap();
        assert!(r.get("oracle-tgwd").unwrap().run(&morse, &s).is_err());
    }

    #[test]
    fn partition_choice() {
        let m = oscillator();
        assert_eq!(PartitionChoice::Auto.resolve(&m).n_tg(), 1);
        assert_eq!(PartitionChoice::SystemBath.resolve(&m).n_hk(), 1);
        for c in [PartitionChoice::Auto, PartitionChoice::SystemBath, PartitionChoice::AllThawed] {
            assert_eq!(PartitionChoice::parse(c.name()), Some(c));
        }
    }

    #[test]
    fn every_method_runs_on_a_small_oscillator() {
        let r = MethodRegistry::default();
        let mut s = RunSettings::new(4, 3, PropagationConfig::new(2.0 * PI / 20.0, 128));
        s.threads = 1;
        for m in r.iter() {
            let spec = m.run(&oscillator(), &s).unwrap();
            assert_eq!(spec.meta.method, m.name());
            assert!(spec.intensities.iter().all(|x| x.is_finite()));
        }
    }
}
