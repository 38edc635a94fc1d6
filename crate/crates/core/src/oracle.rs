//! Closed-form reference spectra.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model::{MorseParams, HBAR};
use crate::spectrum::{Spectrum, SpectrumMeta};

/// Harmonic oscillator with a coherent reference state centered at `(p0, q0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicOracleParams {
    pub m: f64,
    pub omega: f64,
    pub p0: f64,
    pub q0: f64,
}

impl HarmonicOracleParams {
    pub fn new(m: f64, omega: f64, p0: f64, q0: f64) -> Result<Self> {
        if !(m > 0.0 && omega > 0.0) {
            return Err(invalid("oracle oscillator needs m > 0 and omega > 0"));
        }
        Ok(Self { m, omega, p0, q0 })
    }

    /// `λ = (mω q0² + p0²/(mω)) / 2ħ`.
    pub fn lambda(&self) -> f64 {
        (self.m * self.omega * self.q0 * self.q0 + self.p0 * self.p0 / (self.m * self.omega)) / (2.0 * HBAR)
    }

    fn level(&self, k: usize) -> f64 {
        HBAR * self.omega * (k as f64 + 0.5)
    }
}

/// A delta-comb line `(energy, weight)`.
pub type Line = (f64, f64);

/// Poisson comb `e^{−λ} λ^k / k!` at `ħω(k + ½)`.
pub fn tgwd_harmonic_weights(params: &HarmonicOracleParams, k_max: usize) -> Vec<Line> {
    let lambda = params.lambda();
    let mut w = (-lambda).exp();
    (0..=k_max)
        .map(|k| {
            if k > 0 {
                w *= lambda / k as f64;
            }
            (params.level(k), w)
        })
        .collect()
}

/// Squared-ratio comb `e^{−2λ} λ^{2k} / (k!)²` at `ħω(k + ½)`.
pub fn hybrid_sep_harmonic_weights(params: &HarmonicOracleParams, k_max: usize) -> Vec<Line> {
    tgwd_harmonic_weights(params, k_max).into_iter().map(|(e, w)| (e, w * w)).collect()
}

/// Number of bound Morse levels, `⌊2D_e/ħω − ½⌋ + 1`.
pub fn morse_bound_levels(params: &MorseParams) -> usize {
    let x = 2.0 * params.de / (HBAR * params.omega()) - 0.5;
    if x < 0.0 {
        0
    } else {
        x.floor() as usize + 1
    }
}

/// `E_n = ħω(n + ½) − [ħω(n + ½)]² / 4D_e` for `n = 0..=n_max`.
pub fn morse_eigenvalues(params: &MorseParams, n_max: usize) -> Result<Vec<f64>> {
    params.validate()?;
    let bound = morse_bound_levels(params);
    if n_max >= bound {
        return Err(Error::AboveDissociation { level: n_max, bound });
    }
    let w = HBAR * params.omega();
    Ok((0..=n_max)
        .map(|n| {
            let x = w * (n as f64 + 0.5);
            x - x * x / (4.0 * params.de)
        })
        .collect())
}

/// All pairwise sums of two combs (uncoupled product spectrum), sorted by energy.
pub fn product_comb(a: &[Line], b: &[Line]) -> Vec<Line> {
    let mut out: Vec<Line> = a.iter().flat_map(|&(ea, wa)| b.iter().map(move |&(eb, wb)| (ea + eb, wa * wb))).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

/// Line list as a spectrum record (energies are the line positions).
pub fn lines_to_spectrum(lines: &[Line], method: &str) -> Spectrum {
    let mut meta = SpectrumMeta::new(method, 0, 0);
    meta.push("kind", "lines");
    Spectrum {
        energies: lines.iter().map(|l| l.0).collect(),
        intensities: lines.iter().map(|l| l.1).collect(),
        shifted: false,
        window: Default::default(),
        lineshape: Default::default(),
        meta,
    }
}

/// Lines broadened by the kernel of an unwindowed separable transform of
/// `n` samples spaced `dt`, on the matching FFT grid. Each line keeps its
/// weight as integrated area.
pub fn render_lines(lines: &[Line], n: usize, dt: f64, method: &str) -> Result<Spectrum> {
    if n == 0 || !(dt > 0.0) {
        return Err(invalid("rendering needs n > 0 and dt > 0"));
    }
    let de = 2.0 * PI * HBAR / (n as f64 * dt);
    let total = n as f64 * dt;
    let mut y = vec![0.0; n];
    for (k, yk) in y.iter_mut().enumerate() {
        let e = k as f64 * de;
        for &(el, w) in lines {
            let x = 0.5 * (e - el) * dt / HBAR;
            let s = x.sin();
            let dirichlet = if s.abs() < 1e-300 { n as f64 * n as f64 } else { ((n as f64 * x).sin() / s).powi(2) };
            *yk += w * dirichlet * dt * dt / (2.0 * PI * HBAR * total);
        }
    }
    let mut meta = SpectrumMeta::new(method, 0, 0);
    meta.push("kind", "rendered-lines");
    Ok(Spectrum::on_grid(0.0, de, y, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_center() -> HarmonicOracleParams {
        HarmonicOracleParams::new(1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn ground_state_only_at_origin() {
        let p = HarmonicOracleParams::new(2.0, 3.0, 0.0, 0.0).unwrap();
        let lines = tgwd_harmonic_weights(&p, 5);
        assert_eq!(lines[0], (1.5, 1.0));
        assert!(lines[1..].iter().all(|l| l.1 == 0.0));
        assert_eq!(hybrid_sep_harmonic_weights(&p, 5)[0], (1.5, 1.0));
    }

    #[test]
    fn reference_center_ratios() {
        let p = reference_center();
        assert_relative_eq!(p.lambda(), 0.5);
        let t = tgwd_harmonic_weights(&p, 4);
        assert_relative_eq!(t[1].1 / t[0].1, 0.5, max_relative = 1e-14);
        let h = hybrid_sep_harmonic_weights(&p, 4);
        assert_relative_eq!(h[1].1 / h[0].1, 0.25, max_relative = 1e-14);
        for k in 0..=4 {
            assert_relative_eq!(h[k].1 / h[0].1, (t[k].1 / t[0].1).powi(2), max_relative = 1e-14);
            assert_relative_eq!(t[k].0, k as f64 + 0.5);
        }
    }

    #[test]
    fn poisson_normalization() {
        let p = HarmonicOracleParams::new(1.0, 2.0, 3.0, 0.4).unwrap();
        let s: f64 = tgwd_harmonic_weights(&p, 80).iter().map(|l| l.1).sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn iodine_levels() {
        let m = MorseParams::iodine();
        let e = morse_eigenvalues(&m, 3).unwrap();
        assert!((e[0] - 4.8516e-4).abs() < 1e-8, "{}", e[0]);
        assert!((e[1] - e[0] - 9.641e-4).abs() < 1e-7);
        assert!(e[1] - e[0] < m.omega());
        let bound = morse_bound_levels(&m);
        assert_eq!(bound, 117);
        assert!(morse_eigenvalues(&m, bound - 1).is_ok());
        assert!(matches!(morse_eigenvalues(&m, bound), Err(Error::AboveDissociation { .. })));
    }

    #[test]
    fn deep_well_is_harmonic() {
        let m = MorseParams { de: 1e12, re: 0.0, alpha: 1e-6, mass: 1.0 };
        let w = m.omega();
        for (n, e) in morse_eigenvalues(&m, 10).unwrap().iter().enumerate() {
            assert_relative_eq!(*e, w * (n as f64 + 0.5), max_relative = 1e-9);
        }
    }

    #[test]
    fn rendered_lines_keep_their_area() {
        let lines = tgwd_harmonic_weights(&reference_center(), 6);
        let spec = render_lines(&lines, 2048, 2.0 * PI / 20.0, "oracle").unwrap();
        let total: f64 = lines.iter().map(|l| l.1).sum();
        assert_relative_eq!(spec.total_area(), total, max_relative = 1e-3);
    }

    #[test]
    fn product_comb_adds_energies() {
        let a = [(1.0, 0.5), (2.0, 0.5)];
        let b = [(0.1, 1.0)];
        assert_eq!(product_comb(&a, &b), vec![(1.1, 0.5), (2.1, 0.5)]);
    }
}
