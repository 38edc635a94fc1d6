//! Time signals, power spectra on the FFT energy grid, and peak extraction.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::model::{BathSpec, HBAR};

/// Complex samples `f(t_k)` at `t_k = k·dt`, `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub dt: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("signal time step must be positive, got {dt}")));
        }
        if samples.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("signal contains non-finite samples"));
        }
        Ok(Self { samples, dt })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `Σ |f_k|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Taper applied to one-sided signals before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    None,
    /// `cos²(π k / 2N)`: one at `t = 0`, zero at the end of the window.
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann => (0..n).map(|k| (PI * k as f64 / (2.0 * n as f64)).cos().powi(2)).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::None => "none",
            Window::Hann => "hann",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Window::None),
            "hann" => Some(Window::Hann),
            _ => None,
        }
    }
}

/// Whether intensities are a squared modulus of a transform (power) or the real
/// part of one (amplitude). The two give different line profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lineshape {
    #[default]
    Power,
    Amplitude,
}

impl Lineshape {
    pub fn name(self) -> &'static str {
        match self {
            Lineshape::Power => "power",
            Lineshape::Amplitude => "amplitude",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "power" => Some(Lineshape::Power),
            "amplitude" => Some(Lineshape::Amplitude),
            _ => None,
        }
    }
}

/// How time signals are turned into spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformOptions {
    pub window: Window,
    /// Zero-padding factor (1 = none).
    pub pad: usize,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self { window: Window::None, pad: 1 }
    }
}

/// Run information carried with every spectrum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumMeta {
    pub method: String,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Free-form `key = value` entries written to the output header.
    pub extra: Vec<(String, String)>,
}

impl SpectrumMeta {
    pub fn new(method: impl Into<String>, n_trajectories: usize, seed: u64) -> Self {
        Self { method: method.into(), n_trajectories, seed, extra: Vec::new() }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.extra.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub intensities: Vec<f64>,
    pub shifted: bool,
    /// Taper the intensities were computed with; selects the peak interpolator.
    pub window: Window,
    pub lineshape: Lineshape,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    /// Uniform grid `E_k = e0 + k·de`.
    pub fn on_grid(e0: f64, de: f64, intensities: Vec<f64>, meta: SpectrumMeta) -> Self {
        let energies = (0..intensities.len()).map(|k| e0 + k as f64 * de).collect();
        Self { energies, intensities, shifted: false, window: Window::None, lineshape: Lineshape::Power, meta }
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn with_lineshape(mut self, lineshape: Lineshape) -> Self {
        self.lineshape = lineshape;
        self
    }

    /// Bin width; zero for fewer than two points.
    pub fn bin_width(&self) -> f64 {
        if self.energies.len() < 2 {
            0.0
        } else {
            self.energies[1] - self.energies[0]
        }
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().cloned().fold(0.0, f64::max)
    }

    /// `Σ_k I_k ΔE`.
    pub fn total_area(&self) -> f64 {
        neumaier_sum(self.intensities.iter().copied()) * self.bin_width()
    }

    /// Integrated intensity over bins whose energy lies in `[lo, hi)`.
    pub fn band_area(&self, lo: f64, hi: f64) -> f64 {
        let de = self.bin_width();
        neumaier_sum(
            self.energies.iter().zip(&self.intensities).filter(|(e, _)| **e >= lo && **e < hi).map(|(_, i)| *i),
        ) * de
    }

    fn index_of(&self, e: f64) -> usize {
        let de = self.bin_width();
        if de == 0.0 {
            return 0;
        }
        (((e - self.energies[0]) / de).round().max(0.0) as usize).min(self.energies.len() - 1)
    }

    /// Highest point within `±half_bins` of `e`, refined parabolically.
    pub fn peak_near(&self, e: f64, half_bins: usize) -> Option<Peak> {
        if self.energies.len() < 3 {
            return None;
        }
        let c = self.index_of(e);
        let lo = c.saturating_sub(half_bins).max(1);
        let hi = (c + half_bins).min(self.energies.len() - 2);
        if lo > hi {
            return None;
        }
        let best = (lo..=hi).max_by(|&a, &b| self.intensities[a].total_cmp(&self.intensities[b]))?;
        Some(self.refine(best))
    }

    fn refine(&self, i: usize) -> Peak {
        let de = self.bin_width();
        let y = &self.intensities;
        if i == 0 || i + 1 >= y.len() || !(y[i] > 0.0) {
            return Peak { energy: self.energies[i], intensity: y[i] };
        }
        let (delta, intensity) = match (self.lineshape, self.window) {
            (Lineshape::Power, Window::None) => {
                // two-point magnitude ratio, exact for a tone under a rectangular window
                let (a, b, c) = (y[i - 1].max(0.0).sqrt(), y[i].sqrt(), y[i + 1].max(0.0).sqrt());
                let delta = if c >= a { c / (b + c) } else { -a / (a + b) };
                let x = PI * delta;
                let gain = if x == 0.0 { 1.0 } else { x / x.sin() };
                (delta, y[i] * gain * gain)
            }
            (Lineshape::Power, Window::Hann) => {
                if !(y[i - 1] > 0.0 && y[i + 1] > 0.0) {
                    return Peak { energy: self.energies[i], intensity: y[i] };
                }
                let (a, b, c) = (y[i - 1].ln(), y[i].ln(), y[i + 1].ln());
                let denom = a - 2.0 * b + c;
                let delta = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
                (delta, (b - 0.25 * (a - c) * delta).exp())
            }
            (Lineshape::Amplitude, window) => {
                // profile ∝ sin(2πx)/x, or sin(2πx)/(x(1−4x²)) under Hann; the
                // neighbour with the larger modulus sits on the side of the line
                let (sign, r) =
                    if y[i + 1].abs() >= y[i - 1].abs() { (1.0, y[i + 1] / y[i]) } else { (-1.0, y[i - 1] / y[i]) };
                let d = match window {
                    Window::None => {
                        let r = r.min(0.0);
                        r / (r - 1.0)
                    }
                    Window::Hann => {
                        let r = r.clamp(0.0, 1.0);
                        let b = 5.0 * r + 1.0;
                        if r == 1.0 {
                            0.5
                        } else {
                            (-b + (b * b + 24.0 * r * (1.0 - r)).sqrt()) / (4.0 * (1.0 - r))
                        }
                    }
                };
                let d = d.clamp(0.0, 0.5);
                let x = 2.0 * PI * d;
                let gain = match window {
                    Window::None if x != 0.0 => x / x.sin(),
                    Window::Hann => {
                        let e = 1.0 - 2.0 * d;
                        let sinc = if e == 0.0 { 1.0 } else { (PI * e).sin() / (PI * e) };
                        (1.0 + 2.0 * d) * if x == 0.0 { 1.0 } else { x / (PI * sinc) }
                    }
                    _ => 1.0,
                };
                (sign * d, y[i] * gain)
            }
        };
        Peak { energy: self.energies[i] + delta * de, intensity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub energy: f64,
    pub intensity: f64,
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::default();
    for x in xs {
        s.add(x);
    }
    s.value()
}

/// Bin-wise compensated sum of real arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAccumulator {
    bins: Vec<NeumaierSum>,
}

impl BinAccumulator {
    pub fn new(n: usize) -> Self {
        Self { bins: vec![NeumaierSum::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn add_scaled(&mut self, w: f64, xs: &[f64]) {
        for (b, x) in self.bins.iter_mut().zip(xs) {
            b.add(w * x);
        }
    }

    pub fn merge(&mut self, other: &BinAccumulator) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.bins.iter().map(NeumaierSum::value).collect()
    }
}

/// Turns one-sided signals into `|Σ_k f_k e^{+i E t_k / ħ}|² dt²` on the grid
/// `E_j = 2πħ j / (n_fft dt)`, reusing one FFT plan.
pub struct PowerTransform {
    n: usize,
    n_fft: usize,
    dt: f64,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl PowerTransform {
    pub fn new(n: usize, dt: f64, pad: usize, window: Window) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if pad == 0 {
            return Err(invalid("padding factor must be at least 1"));
        }
        let n_fft = n.max(1) * pad;
        let fft = FftPlanner::new().plan_fft_inverse(n_fft);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self { n, n_fft, dt, window: window.coefficients(n), fft, buf: vec![Complex64::default(); n_fft], scratch })
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * PI * HBAR / (self.n_fft as f64 * self.dt)
    }

    /// Writes the power of `samples` into `out` (length `n_bins`).
    pub fn power(&mut self, samples: &[Complex64], out: &mut [f64]) -> Result<()> {
        if samples.len() != self.n {
            return Err(Error::SignalMismatch { expected: self.n, got: samples.len(), dt: self.dt });
        }
        self.buf.iter_mut().for_each(|z| *z = Complex64::default());
        for ((b, s), w) in self.buf.iter_mut().zip(samples).zip(&self.window) {
            *b = s * w;
        }
        if self.n > 0 {
            self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        }
        let dt2 = self.dt * self.dt;
        for (o, z) in out.iter_mut().zip(&self.buf) {
            *o = z.norm_sqr() * dt2;
        }
        Ok(())
    }
}

/// `I(E_k) = prefactor · Σ_j w_j |DFT(f_j)|²_k dt²` on the unpadded FFT grid.
pub fn accumulate_separable<'a>(
    signals: impl IntoIterator<Item = (&'a TimeSignal, f64)>,
    prefactor: f64,
) -> Result<Spectrum> {
    let mut it = signals.into_iter().peekable();
    let Some((first, _)) = it.peek() else {
        return Ok(Spectrum::on_grid(0.0, 0.0, Vec::new(), SpectrumMeta::default()));
    };
    let (n, dt) = (first.len(), first.dt);
    let mut tr = PowerTransform::new(n, dt, 1, Window::None)?;
    let mut acc = BinAccumulator::new(tr.n_bins());
    let mut power = vec![0.0; tr.n_bins()];
    let mut count = 0;
    for (sig, w) in it {
        if sig.dt != dt {
            return Err(Error::SignalMismatch { expected: n, got: sig.len(), dt: sig.dt });
        }
        tr.power(&sig.samples, &mut power)?;
        acc.add_scaled(w, &power);
        count += 1;
    }
    let intensities = acc.values().into_iter().map(|x| prefactor * x).collect();
    let meta = SpectrumMeta { n_trajectories: count, ..Default::default() };
    Ok(Spectrum::on_grid(0.0, tr.bin_width(), intensities, meta))
}

/// Subtracts the uncoupled bath zero-point energy from the energy axis.
pub fn shift_energy(spec: Spectrum, bath: &BathSpec) -> Result<Spectrum> {
    if spec.shifted {
        return Err(Error::AlreadyShifted);
    }
    let zpe = bath.zero_point_energy();
    let mut out = spec;
    out.energies.iter_mut().for_each(|e| *e -= zpe);
    out.shifted = true;
    Ok(out)
}

/// Local maxima whose topographic prominence exceeds `min_prominence · max`,
/// refined with the three-point estimator matching the spectrum's window and
/// lineshape, and sorted by energy.
///
/// Maxima that could be spectral leakage of a taller peak (below twice the
/// rectangular-window side-lobe envelope at distance `d` bins, `1/(π d)²` for
/// power spectra and `1/(2π d)` for amplitude spectra) are dropped.
pub fn find_peaks(spec: &Spectrum, min_prominence: f64) -> Result<Vec<Peak>> {
    if !(min_prominence > 0.0 && min_prominence < 1.0) {
        return Err(invalid(format!("prominence threshold must lie in (0, 1), got {min_prominence}")));
    }
    let y = &spec.intensities;
    let n = y.len();
    let top = spec.max_intensity();
    if n < 3 || !(top > 0.0) {
        return Ok(Vec::new());
    }
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // walk across plateaus
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                if prominence(y, mid) >= min_prominence * top {
                    candidates.push(mid);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let kept: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&c| {
            !candidates.iter().any(|&o| {
                if y[o] <= y[c] {
                    return false;
                }
                let d = (o as f64 - c as f64).abs();
                let envelope = match spec.lineshape {
                    Lineshape::Power => (PI * d).powi(-2),
                    Lineshape::Amplitude => 1.0 / (2.0 * PI * d),
                };
                y[c] < 2.0 * y[o] * envelope
            })
        })
        .collect();
    Ok(kept.into_iter().map(|i| spec.refine(i)).collect())
}

fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left_min = h;
    for k in (0..i).rev() {
        if y[k] > h {
            break;
        }
        left_min = left_min.min(y[k]);
    }
    let mut right_min = h;
    for &v in &y[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
