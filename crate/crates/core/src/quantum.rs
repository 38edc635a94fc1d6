//! Grid reference: split-operator propagation of the reference coherent state
//! and the spectrum of its autocorrelation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::dynamics::Scheme;
use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, Potential, SystemPotential, HBAR};
use crate::semiclassics::{CoherentState, LagTransform};
use crate::spectrum::{Lineshape, Spectrum, SpectrumMeta, TimeSignal, TransformOptions, Window};

/// Norm drift that aborts a run.
pub const NORM_TOLERANCE: f64 = 1e-8;
/// Probability allowed in the outermost grid layer, in position or momentum.
pub const EDGE_TOLERANCE: f64 = 1e-8;
pub const MIN_POINTS: usize = 64;
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let a = Self { min, max, points };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        if !(self.max > self.min && self.min.is_finite() && self.max.is_finite()) {
            return Err(invalid(format!("grid extent [{}, {}] is empty", self.min, self.max)));
        }
        if self.points < MIN_POINTS || !self.points.is_power_of_two() {
            return Err(invalid(format!("grid needs a power of two ≥ {MIN_POINTS} points, got {}", self.points)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.points as f64
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    /// Angular wavenumber of FFT bin `i`.
    fn wavenumber(&self, i: usize) -> f64 {
        let n = self.points as isize;
        let j = if (i as isize) < n / 2 { i as isize } else { i as isize - n };
        2.0 * PI * j as f64 / (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub dt: f64,
    pub n_steps: usize,
    pub substeps: usize,
    pub scheme: Scheme,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>, dt: f64, n_steps: usize) -> Self {
        Self { axes, dt, n_steps, substeps: 2, scheme: Scheme::default() }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Default grids: 512 points over `[r_e − 0.6, r_e + 1.2]` for a Morse
    /// system, and 128 points per bath mode covering its reference orbit, the
    /// coupling-induced displacement and eight ground-state widths.
    pub fn default_for(model: &ModelSpec, chi: &CoherentState, dt: f64, n_steps: usize) -> Result<Self> {
        if model.dim() > MAX_DIM {
            return Err(invalid(format!("grid propagation supports at most {MAX_DIM} degrees of freedom")));
        }
        let freqs = model.harmonic_frequencies();
        let masses = model.masses();
        let amplitude = |k: usize| {
            let (q, p) = (chi.center.q[k] - if k == 0 { model.system.equilibrium() } else { 0.0 }, chi.center.p[k]);
            (q * q + (p / (masses[k] * freqs[k])).powi(2)).sqrt() + 8.0 / chi.gamma[k].sqrt()
        };
        let mut axes = Vec::with_capacity(model.dim());
        let sys_reach = match model.system {
            SystemPotential::Morse(m) => {
                axes.push(GridAxis::new(m.re - 0.6, m.re + 1.2, 512)?);
                0.6
            }
            SystemPotential::Harmonic(h) => {
                let r = amplitude(0);
                axes.push(GridAxis::new(h.center - r, h.center + r, 256)?);
                r
            }
        };
        for (i, (&w, &c)) in model.bath.omega.iter().zip(&model.bath.coupling).enumerate() {
            let r = amplitude(i + 1) + (c / (w * w)).abs() * sys_reach;
            axes.push(GridAxis::new(-r, r, 128)?);
        }
        Ok(Self::new(axes, dt, n_steps))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.axes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.axes.len() });
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(invalid(format!("grid propagation supports 1 to {MAX_DIM} degrees of freedom")));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps must be at least 1"));
        }
        Ok(())
    }

    fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    /// Coordinates of flat index `idx`, row-major.
    fn point(&self, mut idx: usize, out: &mut [f64]) {
        for d in (0..self.axes.len()).rev() {
            let n = self.axes[d].points;
            out[d] = self.axes[d].coordinate(idx % n);
            idx /= n;
        }
    }
}

/// Output of a grid run.
#[derive(Debug, Clone)]
pub struct GridRun {
    /// `⟨χ|ψ(t_k)⟩`.
    pub signal: TimeSignal,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub max_edge: f64,
}

struct AxisFft {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Row-major N-d FFT with per-axis plans.
struct GridFft {
    shape: Vec<usize>,
    axes: Vec<AxisFft>,
    tmp: Vec<Complex64>,
}

impl GridFft {
    fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let axes = shape
            .iter()
            .map(|&n| AxisFft { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
            .collect();
        Self { shape: shape.to_vec(), axes, tmp: vec![Complex64::default(); shape.iter().product()] }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let dims = self.shape.len();
        for d in 0..dims {
            let n = self.shape[d];
            let plan = if forward { &self.axes[d].fwd } else { &self.axes[d].inv };
            let stride: usize = self.shape[d + 1..].iter().product();
            if stride == 1 {
                lines(plan, data, n);
                continue;
            }
            let block = n * stride;
            for (src, dst) in data.chunks_exact_mut(block).zip(self.tmp.chunks_exact_mut(block)) {
                transpose(src, n, stride, dst);
                lines(plan, dst, n);
                transpose(dst, stride, n, src);
            }
        }
        if !forward {
            let scale = 1.0 / data.len() as f64;
            data.par_iter_mut().for_each(|z| *z *= scale);
        }
    }
}

fn lines(plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64], n: usize) {
    let scratch_len = plan.get_inplace_scratch_len();
    data.par_chunks_mut(n).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, line| plan.process_with_scratch(line, scratch),
    );
}

fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

enum Op {
    Potential(usize),
    Kinetic(usize),
}

/// Operator sequence for one output step, adjacent potential factors merged.
fn schedule(grid: &GridSpec) -> (Vec<Op>, Vec<f64>, Vec<f64>) {
    let h = grid.dt / grid.substeps as f64;
    let mut raw: Vec<(bool, f64)> = Vec::new();
    for _ in 0..grid.substeps {
        for &w in grid.scheme.weights() {
            for (pot, c) in [(true, 0.5 * w * h), (false, w * h), (true, 0.5 * w * h)] {
                match raw.last_mut() {
                    Some((true, prev)) if pot => *prev += c,
                    _ => raw.push((pot, c)),
                }
            }
        }
    }
    let (mut vc, mut tc) = (Vec::new(), Vec::new());
    let index = |list: &mut Vec<f64>, c: f64| match list.iter().position(|x: &f64| x.to_bits() == c.to_bits()) {
        Some(i) => i,
        None => {
            list.push(c);
            list.len() - 1
        }
    };
    let ops = raw
        .into_iter()
        .map(|(pot, c)| if pot { Op::Potential(index(&mut vc, c)) } else { Op::Kinetic(index(&mut tc, c)) })
        .collect();
    (ops, vc, tc)
}

fn phases(values: &[f64], c: f64) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::from_polar(1.0, -v * c / HBAR)).collect()
}

/// Probability in the outermost layer along any axis. In FFT order the
/// momentum edge sits at `n/2 − 1` and `n/2`.
fn edge_probability(data: &[Complex64], shape: &[usize], dv: f64, momentum: bool) -> f64 {
    let mut idx = vec![0usize; shape.len()];
    let mut sum = 0.0;
    let at_edge = |i: usize, n: usize| if momentum { i + 1 == n / 2 || i == n / 2 } else { i == 0 || i + 1 == n };
    for z in data {
        if idx.iter().zip(shape).any(|(&i, &n)| at_edge(i, n)) {
            sum += z.norm_sqr();
        }
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    sum * dv
}

/// `Σ |ψ|² w` in fixed chunks, so the result does not depend on thread count.
fn weighted_norm(psi: &[Complex64], w: Option<&[f64]>) -> f64 {
    const C: usize = 4096;
    let parts: Vec<f64> = match w {
        Some(w) => psi
            .par_chunks(C)
            .zip(w.par_chunks(C))
            .map(|(a, b)| a.iter().zip(b).map(|(z, x)| z.norm_sqr() * x).sum())
            .collect(),
        None => psi.par_chunks(C).map(|a| a.iter().map(|z| z.norm_sqr()).sum()).collect(),
    };
    parts.into_iter().sum()
}

/// Propagates `chi` on `grid` and records `⟨χ|ψ(t_k)⟩` for `k = 0..n_steps`.
pub fn propagate_grid(model: &ModelSpec, grid: &GridSpec, chi: &CoherentState) -> Result<GridRun> {
    let f = model.dim();
    grid.validate(f)?;
    if chi.dim() != f {
        return Err(Error::DimensionMismatch { expected: f, got: chi.dim() });
    }
    let shape = grid.shape();
    let len = grid.len();
    let dv = grid.cell_volume();
    let masses = model.masses().to_vec();

    let mut potential = vec![0.0; len];
    let mut psi = vec![Complex64::default(); len];
    potential.par_iter_mut().zip(psi.par_iter_mut()).enumerate().for_each_init(
        || vec![0.0; f],
        |x, (i, (v, z))| {
            grid.point(i, x);
            *v = model.value(x);
            *z = chi_amplitude(chi, x);
        },
    );
    let chi_conj: Vec<Complex64> = psi.iter().map(|z| z.conj()).collect();

    let kinetic: Vec<Vec<f64>> = grid
        .axes
        .iter()
        .zip(&masses)
        .map(|(a, &m)| (0..a.points).map(|i| (HBAR * a.wavenumber(i)).powi(2) / (2.0 * m)).collect())
        .collect();
    let kinetic_flat: Vec<f64> = (0..len)
        .map(|mut idx| {
            let mut t = 0.0;
            for d in (0..f).rev() {
                t += kinetic[d][idx % shape[d]];
                idx /= shape[d];
            }
            t
        })
        .collect();

    let norm0 = weighted_norm(&psi, None) * dv;
    if (norm0 - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::GridTooSmall { edge: (norm0 - 1.0).abs(), step: 0 });
    }

    let (ops, vcoef, tcoef) = schedule(grid);
    let vphase: Vec<Vec<Complex64>> = vcoef.iter().map(|&c| phases(&potential, c)).collect();
    let tphase: Vec<Vec<Complex64>> = tcoef.iter().map(|&c| phases(&kinetic_flat, c)).collect();
    let mut fft = GridFft::new(&shape);

    let energy = |psi: &[Complex64], fft: &mut GridFft, buf: &mut [Complex64]| -> f64 {
        let v = weighted_norm(psi, Some(&potential)) / weighted_norm(psi, None);
        buf.copy_from_slice(psi);
        fft.transform(buf, true);
        v + weighted_norm(buf, Some(&kinetic_flat)) / weighted_norm(buf, None)
    };
    let mut buf = vec![Complex64::default(); len];
    let e0 = energy(&psi, &mut fft, &mut buf);

    let overlap = |psi: &[Complex64]| -> Complex64 {
        let parts: Vec<Complex64> = psi
            .par_chunks(4096)
            .zip(chi_conj.par_chunks(4096))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
            .collect();
        parts.into_iter().sum::<Complex64>() * dv
    };

    let mut samples = Vec::with_capacity(grid.n_steps);
    let mut max_edge: f64 = 0.0;
    let mut norm_drift: f64 = 0.0;
    for k in 0..grid.n_steps {
        if k > 0 {
            let mut checked_momentum = false;
            for op in &ops {
                match *op {
                    Op::Potential(i) => multiply(&mut psi, &vphase[i]),
                    Op::Kinetic(i) => {
                        fft.transform(&mut psi, true);
                        if !checked_momentum {
                            let edge = edge_probability(&psi, &shape, dv / len as f64, true);
                            max_edge = max_edge.max(edge);
                            if edge > EDGE_TOLERANCE {
                                return Err(Error::GridTooSmall { edge, step: k });
                            }
                            checked_momentum = true;
                        }
                        multiply(&mut psi, &tphase[i]);
                        fft.transform(&mut psi, false);
                    }
                }
            }
            let edge = edge_probability(&psi, &shape, dv, false);
            max_edge = max_edge.max(edge);
            if edge > EDGE_TOLERANCE {
                return Err(Error::GridTooSmall { edge, step: k });
            }
            let drift = (weighted_norm(&psi, None) * dv - norm0).abs();
            norm_drift = norm_drift.max(drift);
            if drift > NORM_TOLERANCE {
                return Err(Error::NormDrift { drift, step: k });
            }
        }
        samples.push(overlap(&psi));
    }
    let e1 = energy(&psi, &mut fft, &mut buf);
    Ok(GridRun {
        signal: TimeSignal::new(samples, grid.dt)?,
        norm_drift,
        energy_drift: ((e1 - e0) / e0).abs(),
        max_edge,
    })
}

fn multiply(psi: &mut [Complex64], phase: &[Complex64]) {
    psi.par_iter_mut().zip(phase.par_iter()).for_each(|(z, p)| *z *= p);
}

fn chi_amplitude(chi: &CoherentState, x: &[f64]) -> Complex64 {
    let mut log = Complex64::default();
    for (k, &xk) in x.iter().enumerate() {
        let (g, q, p) = (chi.gamma[k], chi.center.q[k], chi.center.p[k]);
        let d = xk - q;
        log += Complex64::new(0.25 * (g / PI).ln() - 0.5 * g * d * d, p * d / HBAR);
    }
    log.exp()
}

/// `I(E) = (1/πħ) Re ∫₀ᵀ a(t) e^{iEt/ħ} dt`, the transform of the conjugate-symmetric
/// extension of `a` to `[−T, T]`, on the grid `E_k = 2πħk/(N·pad·dt)`.
pub fn spectrum_from_autocorrelation(signal: &TimeSignal, opts: &TransformOptions) -> Result<Spectrum> {
    let n = signal.len();
    let mut lag = LagTransform::new(n, opts, false)?;
    let mut samples = signal.samples.clone();
    if let Some(first) = samples.first_mut() {
        *first *= 0.5;
    }
    let mut out = vec![0.0; lag.n_bins()];
    lag.real_part(&samples, &mut out);
    let scale = signal.dt / (PI * HBAR);
    out.iter_mut().for_each(|x| *x *= scale);
    let de = 2.0 * PI * HBAR / (lag.n_bins() as f64 * signal.dt);
    Ok(Spectrum::on_grid(0.0, de, out, SpectrumMeta::new("qm", 0, 0))
        .with_window(opts.window)
        .with_lineshape(Lineshape::Amplitude))
}

/// Default transform for grid spectra.
pub fn default_options() -> TransformOptions {
    TransformOptions { window: Window::Hann, pad: 1 }
}

/// Grid spectrum with run diagnostics in the metadata.
pub fn qm_spectrum(
    model: &ModelSpec,
    grid: &GridSpec,
    chi: &CoherentState,
    opts: &TransformOptions,
) -> Result<Spectrum> {
    let run = propagate_grid(model, grid, chi)?;
    let mut spec = spectrum_from_autocorrelation(&run.signal, opts)?;
    let pts: Vec<String> = grid.axes.iter().map(|a| format!("{}:{}:{}", a.min, a.max, a.points)).collect();
    spec.meta.push("grid", pts.join(" "));
    spec.meta.push("norm_drift", run.norm_drift);
    spec.meta.push("energy_drift", run.energy_drift);
    spec.meta.push("max_edge_probability", run.max_edge);
    Ok(spec)
}
