use std::f64::consts::PI;

use semispec_core::dynamics::PropagationConfig;
use semispec_core::model::{BathSpec, ModelSpec, MorseParams, SystemPotential};
use semispec_core::oracle::morse_eigenvalues;
use semispec_core::spectrum::{Spectrum, SpectrumMeta};
use semispec_core::{Error, MethodRegistry, Result, RunSettings, SpectrumMethod};

fn oscillator() -> ModelSpec {
    ModelSpec::new(SystemPotential::harmonic(1.0, 1.0).unwrap(), BathSpec::none()).unwrap()
}

struct Flat;

impl SpectrumMethod for Flat {
    fn name(&self) -> &'static str {
        "hk-sep"
    }

    fn description(&self) -> &'static str {
        "flat test spectrum"
    }

    fn run(&self, _: &ModelSpec, s: &RunSettings) -> Result<Spectrum> {
        Ok(Spectrum::on_grid(0.0, 1.0, vec![1.0; 4], SpectrumMeta::new("flat", s.n_trajectories, s.seed)))
    }
}

#[test]
fn registering_replaces_by_name() {
    let mut reg = MethodRegistry::default();
    let before = reg.names().len();
    reg.register(Box::new(Flat));
    assert_eq!(reg.names().len(), before);
    let s = RunSettings::new(3, 4, PropagationConfig::new(0.1, 8));
    assert_eq!(reg.get("hk-sep").unwrap().run(&oscillator(), &s).unwrap().meta.method, "flat");
    assert!(matches!(MethodRegistry::empty().get("qm"), Err(Error::UnknownMethod { .. })));
}

#[test]
fn thread_count_does_not_change_the_result() {
    let reg = MethodRegistry::default();
    let mut s = RunSettings::new(100, 9, PropagationConfig::new(2.0 * PI / 20.0, 256));
    for name in ["hk-sep", "hk-full"] {
        s.threads = 1;
        let one = reg.get(name).unwrap().run(&oscillator(), &s).unwrap();
        s.threads = 3;
        let three = reg.get(name).unwrap().run(&oscillator(), &s).unwrap();
        assert_eq!(one.intensities, three.intensities, "{name}");
    }
}

#[test]
fn semiclassical_and_grid_morse_levels_agree() {
    let model = ModelSpec::new(SystemPotential::Morse(MorseParams::iodine()), BathSpec::none()).unwrap();
    let dt = 2.0 * PI / MorseParams::iodine().omega() / 20.0;
    let s = RunSettings::new(256, 3, PropagationConfig::new(dt, 4096));
    let reg = MethodRegistry::default();
    let hk = reg.get("hk-sep").unwrap().run(&model, &s).unwrap();
    let qm = reg.get("qm").unwrap().run(&model, &s).unwrap();
    let bin = hk.bin_width();
    for (n, e) in morse_eigenvalues(&MorseParams::iodine(), 2).unwrap().into_iter().enumerate() {
        let a = hk.peak_near(e, 3).unwrap().energy;
        let b = qm.peak_near(e, 3).unwrap().energy;
        assert!((a - e).abs() < bin && (b - e).abs() < bin, "level {n}: hk {a:e}, qm {b:e}, exact {e:e}");
    }
}

#[test]
fn mixed_sep_matches_its_oracle_on_a_harmonic_model() {
    let reg = MethodRegistry::default();
    let s = RunSettings::new(1, 1, PropagationConfig::new(2.0 * PI / 20.0, 1 << 14));
    let model = oscillator();
    let spec = reg.get("mixed-sep").unwrap().run(&model, &s).unwrap();
    let lines = reg.get("oracle-hybrid").unwrap().run(&model, &s).unwrap();
    let area0 = spec.band_area(0.0, 1.0);
    for k in 0..3 {
        let ratio = spec.band_area(k as f64, k as f64 + 1.0) / area0;
        let expect = lines.intensities[k] / lines.intensities[0];
        assert!((ratio / expect - 1.0).abs() < 0.05, "k = {k}: {ratio} vs {expect}");
    }
}
