//! Mixed semiclassical spectra: Herman-Kluk sampling on the system degrees of
//! freedom with the bath fluctuations integrated analytically as a Gaussian
//! about the central bath trajectory.
//!
//! Per time step the bath-column blocks of the monodromy,
//! `m11 = ∂p(t)/∂p_tg(0)`, `m12 = ∂p(t)/∂q_tg(0)`, `m21 = ∂q(t)/∂p_tg(0)` and
//! `m22 = ∂q(t)/∂q_tg(0)`, give the quadratic form `A(t)` (in `(δp, δq)`
//! block order), the linear term `b(t)` and the constant `c(t)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dynamics::{PhasePoint, PropagationConfig, Propagator, TrajectoryState};
use crate::ensemble::reduce;
use crate::error::{invalid, Error, Result};
use crate::linalg::{complex_det, spd_quadratic_form};
use crate::model::{ModelSpec, HBAR};
use crate::semiclassics::{
    log_overlap_1d, sample_point, separable_prefactor, CoherentState, LagTransform, PowerAcc, SamplerConfig,
};
use crate::spectrum::{PowerTransform, Spectrum, SpectrumMeta, TransformOptions};

/// Split of the degrees of freedom into Herman-Kluk (sampled) and thawed
/// Gaussian (bath) sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub hk: Vec<usize>,
    pub tg: Vec<usize>,
}

impl Partition {
    pub fn new(hk: Vec<usize>, tg: Vec<usize>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &i in hk.iter().chain(&tg) {
            if i >= dim || std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("partition index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("partition must cover every degree of freedom"));
        }
        Ok(Self { hk, tg })
    }

    /// System coordinate sampled, every bath mode thawed.
    pub fn system_bath(model: &ModelSpec) -> Self {
        Self { hk: vec![0], tg: (1..model.dim()).collect() }
    }

    /// Everything thawed: a single central trajectory.
    pub fn all_thawed(model: &ModelSpec) -> Self {
        Self { hk: Vec::new(), tg: (0..model.dim()).collect() }
    }

    pub fn n_hk(&self) -> usize {
        self.hk.len()
    }

    pub fn n_tg(&self) -> usize {
        self.tg.len()
    }
}

/// Kernel quantities at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStep {
    /// Row-major `2F_tg x 2F_tg`.
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    pub bm: Vec<Complex64>,
    pub c: Complex64,
    pub phi: f64,
    pub sys_q: Vec<f64>,
    pub sys_p: Vec<f64>,
    /// `ln ⟨χ_sys|p_sys(t), q_sys(t)⟩`.
    pub sys_log_overlap: Complex64,
}

/// Time-indexed kernel of one trajectory in compact storage.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridKernel {
    n_tg: usize,
    n_steps: usize,
    a_re: Vec<f64>,
    a_im: Vec<f64>,
    b: Vec<Complex64>,
    bm: Vec<Complex64>,
    c: Vec<Complex64>,
    phi: Vec<f64>,
    /// `ln⟨χ|x(t)⟩ + i(S_t + φ_t)/ħ` over all degrees of freedom.
    alpha: Vec<Complex64>,
    sys_q: Vec<f64>,
    sys_p: Vec<f64>,
    sys_log_overlap: Vec<Complex64>,
    n_hk: usize,
}

impl HybridKernel {
    fn with_capacity(n_tg: usize, n_hk: usize, n_steps: usize) -> Self {
        let m = 2 * n_tg;
        Self {
            n_tg,
            n_steps: 0,
            a_re: Vec::with_capacity(n_steps * m * m),
            a_im: Vec::with_capacity(n_steps * m * m),
            b: Vec::with_capacity(n_steps * m),
            bm: Vec::with_capacity(n_steps * m),
            c: Vec::with_capacity(n_steps),
            phi: Vec::with_capacity(n_steps),
            alpha: Vec::with_capacity(n_steps),
            sys_q: Vec::with_capacity(n_steps * n_hk),
            sys_p: Vec::with_capacity(n_steps * n_hk),
            sys_log_overlap: Vec::with_capacity(n_steps),
            n_hk,
        }
    }

    fn clear(&mut self) {
        self.n_steps = 0;
        self.a_re.clear();
        self.a_im.clear();
        self.b.clear();
        self.bm.clear();
        self.c.clear();
        self.phi.clear();
        self.alpha.clear();
        self.sys_q.clear();
        self.sys_p.clear();
        self.sys_log_overlap.clear();
    }

    pub fn len(&self) -> usize {
        self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps == 0
    }

    pub fn n_tg(&self) -> usize {
        self.n_tg
    }

    pub fn step(&self, k: usize) -> KernelStep {
        let m = 2 * self.n_tg;
        let mm = m * m;
        KernelStep {
            a: (0..mm).map(|i| Complex64::new(self.a_re[k * mm + i], self.a_im[k * mm + i])).collect(),
            b: self.b[k * m..(k + 1) * m].to_vec(),
            bm: self.bm[k * m..(k + 1) * m].to_vec(),
            c: self.c[k],
            phi: self.phi[k],
            sys_q: self.sys_q[k * self.n_hk..(k + 1) * self.n_hk].to_vec(),
            sys_p: self.sys_p[k * self.n_hk..(k + 1) * self.n_hk].to_vec(),
            sys_log_overlap: self.sys_log_overlap[k],
        }
    }

    fn push(&mut self, step: &KernelStep, alpha: Complex64) {
        self.a_re.extend(step.a.iter().map(|z| z.re));
        self.a_im.extend(step.a.iter().map(|z| z.im));
        self.b.extend_from_slice(&step.b);
        self.bm.extend_from_slice(&step.bm);
        self.c.push(step.c);
        self.phi.push(step.phi);
        self.alpha.push(alpha);
        self.sys_q.extend_from_slice(&step.sys_q);
        self.sys_p.extend_from_slice(&step.sys_p);
        self.sys_log_overlap.push(step.sys_log_overlap);
        self.n_steps += 1;
    }

    /// `max_t max_ij |Im A(t) − Im A(0)|` relative to `max |Im A(0)|`.
    pub fn imag_drift(&self) -> f64 {
        let mm = 4 * self.n_tg * self.n_tg;
        if self.n_steps == 0 || mm == 0 {
            return 0.0;
        }
        let a0 = &self.a_im[..mm];
        let scale = a0.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for k in 1..self.n_steps {
            for (x, y) in self.a_im[k * mm..(k + 1) * mm].iter().zip(a0) {
                worst = worst.max((x - y).abs());
            }
        }
        worst / scale
    }

    /// `det(A(t₁) + A*(t₂))` as a complex number.
    pub fn pair_determinant(&self, j1: usize, j2: usize) -> Complex64 {
        let m = 2 * self.n_tg;
        let mm = m * m;
        let mut buf: Vec<Complex64> = (0..mm)
            .map(|i| {
                Complex64::new(self.a_re[j1 * mm + i], self.a_im[j1 * mm + i])
                    + Complex64::new(self.a_re[j2 * mm + i], -self.a_im[j2 * mm + i])
            })
            .collect();
        complex_det(&mut buf, m)
    }

    /// `¼ b_mᵀ (A + A*)⁻¹ b_m` at step `k`.
    pub fn bm_quadratic(&self, k: usize) -> Result<Complex64> {
        let m = 2 * self.n_tg;
        let mut re: Vec<f64> = self.a_re[k * m * m..(k + 1) * m * m].iter().map(|x| 2.0 * x).collect();
        let mut scratch = vec![Complex64::default(); m];
        let (q, _) = spd_quadratic_form(&mut re, m, &self.bm[k * m..(k + 1) * m], &mut scratch)
            .ok_or_else(|| Error::AMatrixInvariant(format!("A + A* not positive definite at step {k}")))?;
        Ok(0.25 * q)
    }
}

/// Assembles the kernel quantities for one trajectory state.
pub fn assemble_kernel(
    model: &ModelSpec,
    partition: &Partition,
    state: &TrajectoryState,
    chi: &CoherentState,
) -> Result<KernelStep> {
    let f = model.dim();
    if state.point.dim() != f || chi.dim() != f {
        return Err(Error::DimensionMismatch { expected: f, got: state.point.dim().min(chi.dim()) });
    }
    Partition::new(partition.hk.clone(), partition.tg.clone(), f)?;
    let mut scratch = KernelScratch::new(f, partition.n_tg());
    let (step, _) = scratch.assemble(partition, state, chi);
    check_finite(&step, 0)?;
    Ok(step)
}

struct KernelScratch {
    f: usize,
    n: usize,
    m11: Vec<f64>,
    m12: Vec<f64>,
    m21: Vec<f64>,
    m22: Vec<f64>,
}

impl KernelScratch {
    fn new(f: usize, n: usize) -> Self {
        Self { f, n, m11: vec![0.0; f * n], m12: vec![0.0; f * n], m21: vec![0.0; f * n], m22: vec![0.0; f * n] }
    }

    /// Returns the step and `α = ln⟨χ|x(t)⟩ + i(S_t + φ_t)/ħ`, grouped so that
    /// an empty bath reproduces the Herman-Kluk separable integrand bit for bit.
    fn assemble(
        &mut self,
        partition: &Partition,
        state: &TrajectoryState,
        chi: &CoherentState,
    ) -> (KernelStep, Complex64) {
        let (f, n) = (self.f, self.n);
        let m = 2 * n;
        let mono = &state.mono;
        let gamma = &chi.gamma;
        // column-major F x F_tg blocks: entry (k, a) at a * f + k
        for (a, &ca) in partition.tg.iter().enumerate() {
            for k in 0..f {
                self.m11[a * f + k] = mono.mpp(k, ca);
                self.m12[a * f + k] = mono.mpq(k, ca);
                self.m21[a * f + k] = mono.mqp(k, ca);
                self.m22[a * f + k] = mono.mqq(k, ca);
            }
        }
        let h2 = HBAR * HBAR;
        let mut a_mat = vec![Complex64::default(); m * m];
        for a in 0..n {
            for b in 0..n {
                let (mut a11, mut a12, mut a22, mut im12) = (0.0, 0.0, 0.0, 0.0);
                for (k, &g) in gamma.iter().enumerate().take(f) {
                    let ig = 1.0 / g;
                    let (p_a, pq_a, qp_a, q_a) =
                        (self.m11[a * f + k], self.m12[a * f + k], self.m21[a * f + k], self.m22[a * f + k]);
                    let (p_b, pq_b, qp_b, q_b) =
                        (self.m11[b * f + k], self.m12[b * f + k], self.m21[b * f + k], self.m22[b * f + k]);
                    a11 += 0.25 * g * qp_a * qp_b + 0.25 * ig / h2 * p_a * p_b;
                    a12 += 0.25 * g * qp_a * q_b + 0.25 * ig / h2 * p_a * pq_b;
                    a22 += 0.25 * g * q_a * q_b + 0.25 * ig / h2 * pq_a * pq_b;
                    im12 += p_a * q_b - qp_a * pq_b;
                }
                im12 *= 0.25 / HBAR;
                a_mat[a * m + b] = Complex64::new(a11, 0.0);
                a_mat[a * m + n + b] = Complex64::new(a12, im12);
                a_mat[(n + b) * m + a] = Complex64::new(a12, im12);
                a_mat[(n + a) * m + n + b] = Complex64::new(a22, 0.0);
            }
        }

        let q = &state.point.q;
        let p = &state.point.p;
        let i = Complex64::i();
        let mut bvec = vec![Complex64::default(); m];
        let mut bm = vec![Complex64::default(); m];
        for (a, &ca) in partition.tg.iter().enumerate() {
            let (mut b1, mut b2) = (Complex64::default(), Complex64::default());
            for k in 0..f {
                let (g, ig) = (gamma[k], 1.0 / gamma[k]);
                let dq = q[k] - chi.center.q[k];
                let dp = p[k] - chi.center.p[k];
                let (p_a, pq_a, qp_a, q_a) =
                    (self.m11[a * f + k], self.m12[a * f + k], self.m21[a * f + k], self.m22[a * f + k]);
                b1 += -0.5 * dq * Complex64::new(g * qp_a, p_a / HBAR)
                    - 0.5 / h2 * dp * Complex64::new(ig * p_a, -HBAR * qp_a);
                b2 += -0.5 * dq * Complex64::new(g * q_a, pq_a / HBAR)
                    - 0.5 / h2 * dp * Complex64::new(ig * pq_a, -HBAR * q_a);
            }
            let p_ref = i * (chi.center.p[ca] / HBAR);
            bvec[a] = b1;
            bvec[n + a] = b2 - p_ref;
            bm[a] = b1;
            bm[n + a] = b2;
        }

        let mut sys_log = Complex64::default();
        for &k in &partition.hk {
            sys_log += log_overlap_1d(gamma[k], chi.center.q[k], chi.center.p[k], q[k], p[k]);
        }
        let mut bath_log = Complex64::default();
        for &k in &partition.tg {
            bath_log += log_overlap_1d(gamma[k], chi.center.q[k], chi.center.p[k], q[k], p[k]);
        }
        let log_ov = if partition.tg.is_empty() { sys_log } else { sys_log + bath_log };
        let alpha = log_ov + Complex64::new(0.0, (state.action + state.phase) / HBAR);
        let step = KernelStep {
            a: a_mat,
            b: bvec,
            bm,
            c: bath_log + Complex64::new(0.0, state.action / HBAR),
            phi: state.phase,
            sys_q: partition.hk.iter().map(|&k| q[k]).collect(),
            sys_p: partition.hk.iter().map(|&k| p[k]).collect(),
            sys_log_overlap: sys_log,
        };
        (step, alpha)
    }
}

fn check_finite(step: &KernelStep, k: usize) -> Result<()> {
    let ok = step.a.iter().chain(&step.b).chain(&step.bm).all(|z| z.re.is_finite() && z.im.is_finite())
        && step.c.re.is_finite()
        && step.c.im.is_finite()
        && step.phi.is_finite();
    if ok {
        Ok(())
    } else {
        Err(Error::KernelBlowUp { step: k })
    }
}

/// Propagates `initial` and records the kernel at every output step.
pub fn build_kernel(
    model: &ModelSpec,
    partition: &Partition,
    initial: PhasePoint,
    cfg: &PropagationConfig,
    chi: &CoherentState,
) -> Result<HybridKernel> {
    Partition::new(partition.hk.clone(), partition.tg.clone(), model.dim())?;
    let mut prop = Propagator::from_config(model, &model.gamma, cfg)?;
    let mut scratch = KernelScratch::new(model.dim(), partition.n_tg());
    let mut kernel = HybridKernel::with_capacity(partition.n_tg(), partition.n_hk(), cfg.n_steps);
    fill_kernel(&mut prop, &mut scratch, partition, initial, cfg, chi, &mut kernel)?;
    Ok(kernel)
}

fn fill_kernel(
    prop: &mut Propagator<'_, ModelSpec>,
    scratch: &mut KernelScratch,
    partition: &Partition,
    initial: PhasePoint,
    cfg: &PropagationConfig,
    chi: &CoherentState,
    kernel: &mut HybridKernel,
) -> Result<f64> {
    kernel.clear();
    let mut max_c: f64 = 1.0;
    prop.run(initial, cfg.n_steps, cfg.dt, |k, s| {
        let (step, alpha) = scratch.assemble(partition, s, chi);
        check_finite(&step, k)?;
        kernel.push(&step, alpha);
        max_c = max_c.max(s.last_det.norm().sqrt());
        Ok(())
    })?;
    Ok(max_c)
}

/// Imaginary part of `A` may drift by at most this fraction of its size.
pub const IMAG_A_TOLERANCE: f64 = 1e-8;

fn check_imag(kernel: &HybridKernel) -> Result<()> {
    let drift = kernel.imag_drift();
    if drift > IMAG_A_TOLERANCE {
        return Err(Error::AMatrixInvariant(format!("Im A(t) drifts by {drift:.3e} relative")));
    }
    Ok(())
}

struct HybridSetup<'a> {
    partition: &'a Partition,
    sampler: SamplerConfig,
}

impl<'a> HybridSetup<'a> {
    fn new(
        model: &ModelSpec,
        partition: &'a Partition,
        n_trajectories: usize,
        seed: u64,
        cfg: &PropagationConfig,
        chi: &CoherentState,
    ) -> Result<Self> {
        Partition::new(partition.hk.clone(), partition.tg.clone(), model.dim())?;
        cfg.validate()?;
        if chi.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: chi.dim() });
        }
        let sampler = SamplerConfig::restricted(n_trajectories, seed, partition.hk.clone());
        sampler.validate(model.dim())?;
        Ok(Self { partition, sampler })
    }

    fn meta(&self, method: &str, max_c: f64) -> SpectrumMeta {
        let mut meta = SpectrumMeta::new(method, self.sampler.n_trajectories, self.sampler.seed);
        meta.push("f_hk", self.partition.n_hk());
        meta.push("f_tg", self.partition.n_tg());
        meta.push("max_abs_prefactor", max_c);
        meta
    }
}

/// Separable mixed spectrum (single time integral).
pub fn mixed_sep_spectrum(
    model: &ModelSpec,
    partition: &Partition,
    n_trajectories: usize,
    seed: u64,
    cfg: &PropagationConfig,
    chi: &CoherentState,
    opts: &TransformOptions,
) -> Result<Spectrum> {
    let setup = HybridSetup::new(model, partition, n_trajectories, seed, cfg, chi)?;
    let n_tg = partition.n_tg();
    let m = 2 * n_tg;
    let n_bins = PowerTransform::new(cfg.n_steps, cfg.dt, opts.pad, opts.window)?.n_bins();
    struct SepWorker<'a> {
        prop: Propagator<'a, ModelSpec>,
        scratch: KernelScratch,
        kernel: HybridKernel,
        transform: PowerTransform,
        samples: Vec<f64>,
        signal: Vec<Complex64>,
        mat: Vec<f64>,
        qs: Vec<Complex64>,
    }
    let acc = reduce(
        n_trajectories,
        || {
            Ok(SepWorker {
                prop: Propagator::from_config(model, &model.gamma, cfg)?,
                scratch: KernelScratch::new(model.dim(), n_tg),
                kernel: HybridKernel::with_capacity(n_tg, partition.n_hk(), cfg.n_steps),
                transform: PowerTransform::new(cfg.n_steps, cfg.dt, opts.pad, opts.window)?,
                samples: vec![0.0; n_bins],
                signal: Vec::with_capacity(cfg.n_steps),
                mat: vec![0.0; m * m],
                qs: vec![Complex64::default(); m],
            })
        },
        || PowerAcc::new(n_bins),
        |w, acc, i| {
            let (x0, weight) = sample_point(&setup.sampler, chi, i);
            let max_c = fill_kernel(&mut w.prop, &mut w.scratch, partition, x0, cfg, chi, &mut w.kernel)?;
            check_imag(&w.kernel)?;
            w.signal.clear();
            let k = &w.kernel;
            for t in 0..k.n_steps {
                let mut g = k.alpha[t];
                if n_tg > 0 {
                    for (dst, src) in w.mat.iter_mut().zip(&k.a_re[t * m * m..(t + 1) * m * m]) {
                        *dst = 2.0 * src;
                    }
                    let (q, ln_det) = spd_quadratic_form(&mut w.mat, m, &k.bm[t * m..(t + 1) * m], &mut w.qs)
                        .ok_or_else(|| Error::AMatrixInvariant(format!("A + A* not positive definite at step {t}")))?;
                    g += 0.25 * q - 0.25 * ln_det;
                }
                let v = g.exp();
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::KernelBlowUp { step: t });
                }
                w.signal.push(v);
            }
            w.transform.power(&w.signal, &mut w.samples)?;
            acc.bins.add_scaled(weight, &w.samples);
            acc.max_prefactor = acc.max_prefactor.max(max_c);
            Ok(())
        },
    )?;
    let pref = separable_prefactor(n_tg, cfg.total_time());
    let de = 2.0 * PI * HBAR / (n_bins as f64 * cfg.dt);
    let intensities = acc.bins.values().into_iter().map(|x| pref * x).collect();
    Ok(Spectrum::on_grid(0.0, de, intensities, setup.meta("mixed-sep", acc.max_prefactor)).with_window(opts.window))
}

/// Full mixed spectrum (double time integral over the triangle `t₂ ≥ t₁`,
/// summed by lag and transformed once per trajectory).
pub fn mixed_full_spectrum(
    model: &ModelSpec,
    partition: &Partition,
    n_trajectories: usize,
    seed: u64,
    cfg: &PropagationConfig,
    chi: &CoherentState,
    opts: &TransformOptions,
) -> Result<Spectrum> {
    let setup = HybridSetup::new(model, partition, n_trajectories, seed, cfg, chi)?;
    let n_tg = partition.n_tg();
    let m = 2 * n_tg;
    let n = cfg.n_steps;
    let n_bins = LagTransform::new(n, opts, true)?.n_bins();
    struct FullWorker<'a> {
        prop: Propagator<'a, ModelSpec>,
        scratch: KernelScratch,
        kernel: HybridKernel,
        lag_fft: LagTransform,
        lag: Vec<Complex64>,
        out: Vec<f64>,
        mat: Vec<f64>,
        v: Vec<Complex64>,
        qs: Vec<Complex64>,
    }
    let acc = reduce(
        n_trajectories,
        || {
            Ok(FullWorker {
                prop: Propagator::from_config(model, &model.gamma, cfg)?,
                scratch: KernelScratch::new(model.dim(), n_tg),
                kernel: HybridKernel::with_capacity(n_tg, partition.n_hk(), n),
                lag_fft: LagTransform::new(n, opts, true)?,
                lag: vec![Complex64::default(); n],
                out: vec![0.0; n_bins],
                mat: vec![0.0; m * m],
                v: vec![Complex64::default(); m],
                qs: vec![Complex64::default(); m],
            })
        },
        || PowerAcc::new(n_bins),
        |w, acc, i| {
            let (x0, weight) = sample_point(&setup.sampler, chi, i);
            let max_c = fill_kernel(&mut w.prop, &mut w.scratch, partition, x0, cfg, chi, &mut w.kernel)?;
            check_imag(&w.kernel)?;
            w.lag.iter_mut().for_each(|z| *z = Complex64::default());
            let k = &w.kernel;
            if n_tg == 1 {
                lag_sum_one_mode(k, &mut w.lag)?;
            } else {
                for j1 in 0..n {
                    let a1 = &k.a_re[j1 * m * m..(j1 + 1) * m * m];
                    let b1 = &k.b[j1 * m..(j1 + 1) * m];
                    for j2 in j1..n {
                        let mut g = k.alpha[j1] + k.alpha[j2].conj();
                        if n_tg > 0 {
                            let a2 = &k.a_re[j2 * m * m..(j2 + 1) * m * m];
                            for ((dst, x), y) in w.mat.iter_mut().zip(a1).zip(a2) {
                                *dst = x + y;
                            }
                            for ((dst, x), y) in w.v.iter_mut().zip(b1).zip(&k.b[j2 * m..(j2 + 1) * m]) {
                                *dst = x + y.conj();
                            }
                            let (q, ln_det) = spd_quadratic_form(&mut w.mat, m, &w.v, &mut w.qs).ok_or_else(|| {
                                Error::AMatrixInvariant(format!("A(t1) + A*(t2) not positive definite at ({j1}, {j2})"))
                            })?;
                            g += 0.25 * q - 0.5 * ln_det;
                        }
                        let z = g.exp();
                        w.lag[j2 - j1] += if j2 == j1 { 0.5 * z } else { z };
                    }
                }
            }
            if w.lag.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::KernelBlowUp { step: n });
            }
            w.lag_fft.real_part(&w.lag, &mut w.out);
            acc.bins.add_scaled(weight, &w.out);
            acc.max_prefactor = acc.max_prefactor.max(max_c);
            Ok(())
        },
    )?;
    let pref = 2.0 * separable_prefactor(n_tg, cfg.total_time()) * cfg.dt * cfg.dt;
    let de = 2.0 * PI * HBAR / (n_bins as f64 * cfg.dt);
    let mut meta = setup.meta("mixed", acc.max_prefactor);
    if n > crate::semiclassics::FULL_TA_STEP_WARNING {
        meta.push("warning", format!("{n} steps: the double time integral scales as n_steps^2"));
    }
    let intensities = acc.bins.values().into_iter().map(|x| pref * x).collect();
    Ok(Spectrum::on_grid(0.0, de, intensities, meta).with_window(opts.window))
}

/// Lag sum specialized to one thawed mode (2 x 2 real solves in closed form).
fn lag_sum_one_mode(k: &HybridKernel, lag: &mut [Complex64]) -> Result<()> {
    let n = k.n_steps;
    for j1 in 0..n {
        let a1 = &k.a_re[j1 * 4..j1 * 4 + 4];
        let (p1, q1) = (k.b[j1 * 2], k.b[j1 * 2 + 1]);
        let al1 = k.alpha[j1];
        for j2 in j1..n {
            let a2 = &k.a_re[j2 * 4..j2 * 4 + 4];
            let (a, b, d) = (a1[0] + a2[0], a1[1] + a2[1], a1[3] + a2[3]);
            let det = a * d - b * b;
            if !(a > 0.0 && det > 0.0) {
                return Err(Error::AMatrixInvariant(format!("A(t1) + A*(t2) not positive definite at ({j1}, {j2})")));
            }
            let v0 = p1 + k.b[j2 * 2].conj();
            let v1 = q1 + k.b[j2 * 2 + 1].conj();
            let quad = (v0 * v0 * d - v0 * v1 * (2.0 * b) + v1 * v1 * a) / det;
            let z = (al1 + k.alpha[j2].conj() + 0.25 * quad).exp() / det.sqrt();
            lag[j2 - j1] += if j2 == j1 { 0.5 * z } else { z };
        }
    }
    Ok(())
}
