//! Coherent states, Monte Carlo initial conditions, and the time-averaged
//! Herman-Kluk spectra (separable single-time and full double-time forms).

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::dynamics::{too_small, PhasePoint, PropagationConfig, Propagator, WidthTable};
use crate::ensemble::{reduce, Merge};
use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul, symplectic_inverse};
use crate::model::{ModelSpec, HBAR};
use crate::spectrum::{BinAccumulator, PowerTransform, Spectrum, SpectrumMeta, TimeSignal, TransformOptions};

/// Product of one-dimensional coherent states `⟨x|p,q⟩ = (γ/π)^¼ exp(−γ(x−q)²/2 + ip(x−q)/ħ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentState {
    pub center: PhasePoint,
    pub gamma: Vec<f64>,
}

impl CoherentState {
    pub fn new(center: PhasePoint, gamma: Vec<f64>) -> Result<Self> {
        if center.dim() != gamma.len() {
            return Err(Error::DimensionMismatch { expected: center.dim(), got: gamma.len() });
        }
        if gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(invalid("coherent-state widths must be positive"));
        }
        Ok(Self { center, gamma })
    }

    /// The model's reference state `χ`.
    pub fn reference(model: &ModelSpec) -> Self {
        Self { center: model.ref_center.clone(), gamma: model.gamma.clone() }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// `ln ⟨self|p,q⟩` summed over every degree of freedom.
    #[inline]
    pub fn log_overlap_with(&self, q: &[f64], p: &[f64]) -> Complex64 {
        let mut acc = Complex64::default();
        for i in 0..self.gamma.len() {
            acc += log_overlap_1d(self.gamma[i], self.center.q[i], self.center.p[i], q[i], p[i]);
        }
        acc
    }

    /// `ln ⟨self|p,q⟩` restricted to the listed degrees of freedom.
    #[inline]
    pub fn log_overlap_on(&self, dofs: &[usize], q: &[f64], p: &[f64]) -> Complex64 {
        let mut acc = Complex64::default();
        for &i in dofs {
            acc += log_overlap_1d(self.gamma[i], self.center.q[i], self.center.p[i], q[i], p[i]);
        }
        acc
    }
}

/// `ln ⟨p,q|p',q'⟩` for one degree of freedom with common width `γ`.
#[inline]
pub fn log_overlap_1d(gamma: f64, q: f64, p: f64, q2: f64, p2: f64) -> Complex64 {
    let dq = q - q2;
    let dp = p - p2;
    Complex64::new(-0.25 * gamma * dq * dq - dp * dp / (4.0 * gamma * HBAR * HBAR), (p + p2) * dq / (2.0 * HBAR))
}

/// `⟨bra|ket⟩` with the ket sharing the bra's widths.
pub fn overlap(bra: &CoherentState, ket_center: &PhasePoint) -> Result<Complex64> {
    if ket_center.dim() != bra.dim() {
        return Err(Error::DimensionMismatch { expected: bra.dim(), got: ket_center.dim() });
    }
    Ok(bra.log_overlap_with(&ket_center.q, &ket_center.p).exp())
}

/// Monte Carlo settings. Draws come from the Husimi density of the reference
/// state on the `sampled` degrees of freedom; the others sit at the reference
/// center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_trajectories: usize,
    pub seed: u64,
    pub sampled: Vec<usize>,
}

impl SamplerConfig {
    /// Samples every degree of freedom of `model`.
    pub fn all(model: &ModelSpec, n_trajectories: usize, seed: u64) -> Self {
        Self { n_trajectories, seed, sampled: (0..model.dim()).collect() }
    }

    /// Samples only the listed degrees of freedom.
    pub fn restricted(n_trajectories: usize, seed: u64, sampled: Vec<usize>) -> Self {
        Self { n_trajectories, seed, sampled }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_trajectories < 1 {
            return Err(invalid("at least one trajectory is required"));
        }
        let mut seen = vec![false; dim];
        for &i in &self.sampled {
            if i >= dim || std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("sampled index {i} is out of range or repeated")));
            }
        }
        Ok(())
    }
}

/// Initial condition and weight of trajectory `index`. The weight folds the
/// phase-space measure `dp dq / 2πħ` into the importance ratio:
/// `1 / (N |⟨χ|p,q⟩|²)` over the sampled degrees of freedom.
pub fn sample_point(cfg: &SamplerConfig, chi: &CoherentState, index: usize) -> (PhasePoint, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut point = chi.center.clone();
    for &i in &cfg.sampled {
        let g = chi.gamma[i];
        let zq: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        point.q[i] += zq / g.sqrt();
        point.p[i] += zp * HBAR * g.sqrt();
    }
    let log_ov = chi.log_overlap_on(&cfg.sampled, &point.q, &point.p);
    let weight = (-2.0 * log_ov.re).exp() / cfg.n_trajectories as f64;
    (point, weight)
}

/// All `(initial condition, weight)` pairs of a run, in index order.
pub fn sample_initial<'a>(
    cfg: &'a SamplerConfig,
    model: &ModelSpec,
) -> Result<impl Iterator<Item = (PhasePoint, f64)> + 'a> {
    cfg.validate(model.dim())?;
    let chi = CoherentState::reference(model);
    Ok((0..cfg.n_trajectories).map(move |i| sample_point(cfg, &chi, i)))
}

/// `(2ħ)^{−F_tg} / (2πħ T)`: normalization of modulus-squared single-time
/// spectra with the phase-space measure folded into the trajectory weights.
pub fn separable_prefactor(n_tg: usize, total_time: f64) -> f64 {
    if total_time == 0.0 {
        return 0.0;
    }
    (2.0 * HBAR).powi(-(n_tg as i32)) / (2.0 * PI * HBAR * total_time)
}

/// Per-chunk scratch for trajectory methods.
pub(crate) struct Worker<'a> {
    pub prop: Propagator<'a, ModelSpec>,
    pub transform: PowerTransform,
    pub power: Vec<f64>,
    pub samples: Vec<Complex64>,
}

impl<'a> Worker<'a> {
    pub fn new(model: &'a ModelSpec, prop: &PropagationConfig, opts: &TransformOptions) -> Result<Self> {
        let transform = PowerTransform::new(prop.n_steps, prop.dt, opts.pad, opts.window)?;
        Ok(Self {
            prop: Propagator::from_config(model, &model.gamma, prop)?,
            power: vec![0.0; transform.n_bins()],
            samples: Vec::with_capacity(prop.n_steps),
            transform,
        })
    }
}

/// Weighted power accumulator with prefactor diagnostics.
pub(crate) struct PowerAcc {
    pub bins: BinAccumulator,
    pub max_prefactor: f64,
}

impl PowerAcc {
    pub fn new(n: usize) -> Self {
        Self { bins: BinAccumulator::new(n), max_prefactor: 0.0 }
    }
}

impl Merge for PowerAcc {
    fn merge(&mut self, other: Self) {
        self.bins.merge(&other.bins);
        self.max_prefactor = self.max_prefactor.max(other.max_prefactor);
    }
}

/// Fills `out` with `f(t_k) = ⟨χ|p(t_k),q(t_k)⟩ e^{i(S_t + φ_t)/ħ}`; returns max |C_t|.
fn fill_separable(
    prop: &mut Propagator<'_, ModelSpec>,
    initial: PhasePoint,
    cfg: &PropagationConfig,
    chi: &CoherentState,
    out: &mut Vec<Complex64>,
) -> Result<f64> {
    out.clear();
    let mut max_c: f64 = 1.0;
    prop.run(initial, cfg.n_steps, cfg.dt, |_, s| {
        let log_ov = chi.log_overlap_with(&s.point.q, &s.point.p);
        out.push((log_ov + Complex64::new(0.0, (s.action + s.phase) / HBAR)).exp());
        max_c = max_c.max(s.last_det.norm().sqrt());
        Ok(())
    })?;
    Ok(max_c)
}

/// Single-trajectory integrand of the separable time-averaged spectrum.
pub fn hk_separable_signal(
    model: &ModelSpec,
    initial: PhasePoint,
    cfg: &PropagationConfig,
    chi: &CoherentState,
) -> Result<TimeSignal> {
    if initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: initial.dim() });
    }
    if chi.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: chi.dim() });
    }
    let mut prop = Propagator::from_config(model, &model.gamma, cfg)?;
    let mut samples = Vec::with_capacity(cfg.n_steps);
    fill_separable(&mut prop, initial, cfg, chi, &mut samples)?;
    TimeSignal::new(samples, cfg.dt)
}

fn check_inputs(
    model: &ModelSpec,
    sampler: &SamplerConfig,
    cfg: &PropagationConfig,
    chi: &CoherentState,
) -> Result<()> {
    sampler.validate(model.dim())?;
    cfg.validate()?;
    if chi.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: chi.dim() });
    }
    Ok(())
}

/// Separable time-averaged Herman-Kluk spectrum.
pub fn hk_sep_spectrum(
    model: &ModelSpec,
    sampler: &SamplerConfig,
    cfg: &PropagationConfig,
    chi: &CoherentState,
    opts: &TransformOptions,
) -> Result<Spectrum> {
    check_inputs(model, sampler, cfg, chi)?;
    let n_bins = PowerTransform::new(cfg.n_steps, cfg.dt, opts.pad, opts.window)?.n_bins();
    let acc = reduce(
        sampler.n_trajectories,
        || Worker::new(model, cfg, opts),
        || PowerAcc::new(n_bins),
        |w, acc, i| {
            let (x0, weight) = sample_point(sampler, chi, i);
            let max_c = fill_separable(&mut w.prop, x0, cfg, chi, &mut w.samples)?;
            w.transform.power(&w.samples, &mut w.power)?;
            acc.bins.add_scaled(weight, &w.power);
            acc.max_prefactor = acc.max_prefactor.max(max_c);
            Ok(())
        },
    )?;
    let pref = separable_prefactor(0, cfg.total_time());
    let de = 2.0 * PI * HBAR / (n_bins as f64 * cfg.dt);
    let mut meta = SpectrumMeta::new("hk-sep", sampler.n_trajectories, sampler.seed);
    meta.push("max_abs_prefactor", acc.max_prefactor);
    let intensities = acc.bins.values().into_iter().map(|x| pref * x).collect();
    Ok(Spectrum::on_grid(0.0, de, intensities, meta).with_window(opts.window))
}

/// Step counts above this make the double time integral expensive.
pub const FULL_TA_STEP_WARNING: usize = 1 << 13;

/// Transforms a lag-summed kernel `L[l]` (with `L[0]` already halved) into
/// `Re Σ_l L[l] e^{±i E t_l / ħ}`.
pub(crate) struct LagTransform {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl LagTransform {
    /// `forward = false` sums with `e^{+iEt}`, `true` with `e^{−iEt}`.
    pub fn new(n: usize, opts: &TransformOptions, forward: bool) -> Result<Self> {
        if opts.pad == 0 {
            return Err(invalid("padding factor must be at least 1"));
        }
        let n_fft = n.max(1) * opts.pad;
        let mut planner = FftPlanner::new();
        let fft = if forward { planner.plan_fft_forward(n_fft) } else { planner.plan_fft_inverse(n_fft) };
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self { fft, window: opts.window.coefficients(n), buf: vec![Complex64::default(); n_fft], scratch })
    }

    pub fn n_bins(&self) -> usize {
        self.buf.len()
    }

    pub fn real_part(&mut self, lag: &[Complex64], out: &mut [f64]) {
        self.buf.iter_mut().for_each(|z| *z = Complex64::default());
        for ((b, l), w) in self.buf.iter_mut().zip(lag).zip(&self.window) {
            *b = l * w;
        }
        if !lag.is_empty() {
            self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        }
        for (o, z) in out.iter_mut().zip(&self.buf) {
            *o = z.re;
        }
    }
}

/// Full double-time Herman-Kluk spectrum with the exact prefactor
/// `C_{t₂−t₁}(p(t₁), q(t₁))` from the composed monodromy `M(t₂) M(t₁)⁻¹`.
pub fn hk_full_spectrum(
    model: &ModelSpec,
    sampler: &SamplerConfig,
    cfg: &PropagationConfig,
    chi: &CoherentState,
    opts: &TransformOptions,
) -> Result<Spectrum> {
    check_inputs(model, sampler, cfg, chi)?;
    let f = model.dim();
    let n = cfg.n_steps;
    let nn = 4 * f * f;
    let n_bins = LagTransform::new(n, opts, false)?.n_bins();
    let widths = WidthTable::new(&model.gamma);
    struct FullWorker<'a> {
        prop: Propagator<'a, ModelSpec>,
        lag_fft: LagTransform,
        mono: Vec<f64>,
        sig: Vec<Complex64>,
        lag: Vec<Complex64>,
        out: Vec<f64>,
        inv: Vec<f64>,
        rel: Vec<f64>,
        det_buf: Vec<Complex64>,
    }
    let acc = reduce(
        sampler.n_trajectories,
        || {
            Ok(FullWorker {
                prop: Propagator::from_config(model, &model.gamma, cfg)?,
                lag_fft: LagTransform::new(n, opts, false)?,
                mono: vec![0.0; n * nn],
                sig: vec![Complex64::default(); n],
                lag: vec![Complex64::default(); n],
                out: vec![0.0; n_bins],
                inv: vec![0.0; nn],
                rel: vec![0.0; nn],
                det_buf: vec![Complex64::default(); f * f],
            })
        },
        || PowerAcc::new(n_bins),
        |w, acc, i| {
            let (x0, weight) = sample_point(sampler, chi, i);
            let mut max_c: f64 = 1.0;
            w.prop.run(x0, n, cfg.dt, |k, s| {
                w.mono[k * nn..(k + 1) * nn].copy_from_slice(s.mono.as_slice());
                let log_ov = chi.log_overlap_with(&s.point.q, &s.point.p);
                w.sig[k] = (log_ov + Complex64::new(0.0, s.action / HBAR)).exp();
                max_c = max_c.max(s.last_det.norm().sqrt());
                Ok(())
            })?;
            w.lag.iter_mut().for_each(|z| *z = Complex64::default());
            for j1 in 0..n {
                symplectic_inverse(&w.mono[j1 * nn..(j1 + 1) * nn], f, &mut w.inv);
                let base = w.sig[j1].conj();
                let mut last = Complex64::new(1.0, 0.0);
                let mut phase = 0.0;
                for j2 in j1..n {
                    matmul(&w.mono[j2 * nn..(j2 + 1) * nn], &w.inv, 2 * f, &mut w.rel);
                    let d = widths.det(&w.rel, &mut w.det_buf);
                    if too_small(d) {
                        return Err(Error::PrefactorUnderflow { t: j2 as f64 * cfg.dt });
                    }
                    let mag = d.norm();
                    let inc = (d * last.conj()).arg();
                    if inc.abs() >= FRAC_PI_2 {
                        return Err(Error::PhaseDiscontinuity { increment: inc, t: j2 as f64 * cfg.dt });
                    }
                    phase += 0.5 * inc;
                    last = d;
                    let c = Complex64::from_polar(mag.sqrt(), phase);
                    let k = c * w.sig[j2] * base;
                    w.lag[j2 - j1] += if j2 == j1 { 0.5 * k } else { k };
                    max_c = max_c.max(mag.sqrt());
                }
            }
            w.lag_fft.real_part(&w.lag, &mut w.out);
            acc.bins.add_scaled(weight, &w.out);
            acc.max_prefactor = acc.max_prefactor.max(max_c);
            Ok(())
        },
    )?;
    let pref = 2.0 * separable_prefactor(0, cfg.total_time()) * cfg.dt * cfg.dt;
    let de = 2.0 * PI * HBAR / (n_bins as f64 * cfg.dt);
    let mut meta = SpectrumMeta::new("hk-full", sampler.n_trajectories, sampler.seed);
    meta.push("max_abs_prefactor", acc.max_prefactor);
    if n > FULL_TA_STEP_WARNING {
        meta.push("warning", format!("{n} steps: the double time integral scales as n_steps^2"));
    }
    let intensities = acc.bins.values().into_iter().map(|x| pref * x).collect();
    Ok(Spectrum::on_grid(0.0, de, intensities, meta).with_window(opts.window))
}
