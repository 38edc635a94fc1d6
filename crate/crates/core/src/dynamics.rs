//! Classical trajectories with the full stability (monodromy) matrix, the
//! classical action and the continuously tracked Herman-Kluk prefactor phase.
//!
//! The elementary update is a velocity-Verlet step together with its exact
//! tangent map, so the monodromy stays symplectic to round-off. A step of
//! length `dt` is split into `substeps` pieces and each piece is either a
//! plain Verlet step or a fourth-order symmetric composition of three of them.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::complex_det;
use crate::model::{ModelSpec, Potential, HBAR};

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), got: p.len() });
        }
        Ok(Self { q, p })
    }

    pub fn zeros(f: usize) -> Self {
        Self { q: vec![0.0; f], p: vec![0.0; f] }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }
}

/// Stability matrix `∂(q(t), p(t)) / ∂(q(0), p(0))` stored as one row-major
/// `2F x 2F` array: rows `q` then `p`, columns `q(0)` then `p(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy {
    f: usize,
    m: Vec<f64>,
}

impl Monodromy {
    pub fn identity(f: usize) -> Self {
        let n = 2 * f;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        Self { f, m }
    }

    pub fn from_row_major(f: usize, m: Vec<f64>) -> Result<Self> {
        if m.len() != 4 * f * f {
            return Err(Error::DimensionMismatch { expected: 4 * f * f, got: m.len() });
        }
        Ok(Self { f, m })
    }

    pub fn dim(&self) -> usize {
        self.f
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.m[r * 2 * self.f + c]
    }

    /// `∂q_i(t)/∂q_j(0)`
    #[inline]
    pub fn mqq(&self, i: usize, j: usize) -> f64 {
        self.at(i, j)
    }

    /// `∂q_i(t)/∂p_j(0)`
    #[inline]
    pub fn mqp(&self, i: usize, j: usize) -> f64 {
        self.at(i, self.f + j)
    }

    /// `∂p_i(t)/∂q_j(0)`
    #[inline]
    pub fn mpq(&self, i: usize, j: usize) -> f64 {
        self.at(self.f + i, j)
    }

    /// `∂p_i(t)/∂p_j(0)`
    #[inline]
    pub fn mpp(&self, i: usize, j: usize) -> f64 {
        self.at(self.f + i, self.f + j)
    }

    /// `max |(Mᵀ J M − J)_ij|`.
    pub fn symplectic_defect(&self) -> f64 {
        let n = 2 * self.f;
        let f = self.f;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                // (Mᵀ J M)_ij = Σ_k M_ki (J M)_kj with J = [[0, I], [-I, 0]]
                let mut s = 0.0;
                for k in 0..f {
                    s += self.at(k, i) * self.at(f + k, j) - self.at(f + k, i) * self.at(k, j);
                }
                let jij = if i < f && j == i + f {
                    1.0
                } else if i >= f && j + f == i {
                    -1.0
                } else {
                    0.0
                };
                worst = worst.max((s - jij).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub point: PhasePoint,
    pub mono: Monodromy,
    /// Classical action `∫ (T − V) dt`.
    pub action: f64,
    /// Unwrapped phase of the Herman-Kluk prefactor, `φ(t)` (units of action).
    pub phase: f64,
    /// Last determinant under the prefactor square root, used for unwrapping.
    pub last_det: Complex64,
}

impl TrajectoryState {
    pub fn new(point: PhasePoint) -> Self {
        let f = point.dim();
        Self {
            t: 0.0,
            point,
            mono: Monodromy::identity(f),
            action: 0.0,
            phase: 0.0,
            last_det: Complex64::new(1.0, 0.0),
        }
    }
}

/// Determinant under the Herman-Kluk square root for a diagonal width matrix Γ:
/// `det ½(Γ^½ Mqq Γ^-½ + Γ^-½ Mpp Γ^½ − iħ Γ^½ Mqp Γ^½ + (i/ħ) Γ^-½ Mpq Γ^-½)`.
pub fn hk_det(mono: &Monodromy, gamma: &[f64]) -> Complex64 {
    let f = mono.dim();
    let mut buf = vec![Complex64::default(); f * f];
    hk_det_into(mono, gamma, &mut buf)
}

pub(crate) fn hk_det_into(mono: &Monodromy, gamma: &[f64], buf: &mut [Complex64]) -> Complex64 {
    WidthTable::new(gamma).det(mono.as_slice(), buf)
}

/// `√(γi/γj)` and `√(γi γj)` for the Herman-Kluk determinant.
#[derive(Debug, Clone)]
pub(crate) struct WidthTable {
    f: usize,
    ratio: Vec<f64>,
    geo: Vec<f64>,
}

impl WidthTable {
    pub(crate) fn new(gamma: &[f64]) -> Self {
        let f = gamma.len();
        let mut ratio = Vec::with_capacity(f * f);
        let mut geo = Vec::with_capacity(f * f);
        for &gi in gamma {
            for &gj in gamma {
                ratio.push((gi / gj).sqrt());
                geo.push((gi * gj).sqrt());
            }
        }
        Self { f, ratio, geo }
    }

    /// Determinant for a raw row-major `2F x 2F` monodromy matrix.
    #[inline]
    pub(crate) fn det(&self, m: &[f64], buf: &mut [Complex64]) -> Complex64 {
        let f = self.f;
        let n = 2 * f;
        if f == 1 {
            let (r, s) = (self.ratio[0], self.geo[0]);
            return Complex64::new(0.5 * (m[0] * r + m[3] / r), 0.5 * (m[2] / (s * HBAR) - HBAR * s * m[1]));
        }
        for i in 0..f {
            let (qrow, prow) = (&m[i * n..i * n + n], &m[(f + i) * n..(f + i) * n + n]);
            for j in 0..f {
                let r = self.ratio[i * f + j];
                let s = self.geo[i * f + j];
                buf[i * f + j] = Complex64::new(
                    0.5 * (qrow[j] * r + prow[f + j] / r),
                    0.5 * (prow[j] / (s * HBAR) - HBAR * s * qrow[f + j]),
                );
            }
        }
        complex_det(buf, f)
    }
}

#[inline]
pub(crate) fn too_small(d: Complex64) -> bool {
    !(d.re.abs().max(d.im.abs()) >= 1e-300)
}

/// The Herman-Kluk prefactor `C_t`, with the square-root branch fixed by the
/// state's unwrapped phase. `gamma` must be the width vector used while the
/// state was propagated.
pub fn hk_prefactor(state: &TrajectoryState, gamma: &[f64]) -> Result<Complex64> {
    let d = hk_det(&state.mono, gamma);
    if too_small(d) {
        return Err(Error::PrefactorUnderflow { t: state.t });
    }
    let c = d.sqrt();
    let reference = Complex64::from_polar(1.0, state.phase / HBAR);
    Ok(if (c * reference.conj()).re < 0.0 { -c } else { c })
}

/// Kinetic plus potential energy.
pub fn energy<P: Potential + ?Sized>(pot: &P, point: &PhasePoint) -> f64 {
    let kinetic: f64 = point.p.iter().zip(pot.masses()).map(|(p, m)| p * p / (2.0 * m)).sum();
    kinetic + pot.value(&point.q)
}

/// Integration scheme used inside one substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Plain velocity Verlet (second order).
    VelocityVerlet,
    /// Symmetric triple-jump composition of velocity Verlet (fourth order).
    #[default]
    Yoshida4,
}

impl Scheme {
    pub(crate) fn weights(self) -> &'static [f64] {
        const VV: [f64; 1] = [1.0];
        // w1 = 1/(2 - 2^(1/3)), w0 = 1 - 2 w1
        const Y4: [f64; 3] = [1.351_207_191_959_657_6, -1.702_414_383_919_315_3, 1.351_207_191_959_657_6];
        match self {
            Scheme::VelocityVerlet => &VV,
            Scheme::Yoshida4 => &Y4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::VelocityVerlet => "velocity-verlet",
            Scheme::Yoshida4 => "yoshida4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "velocity-verlet" | "verlet" => Some(Scheme::VelocityVerlet),
            "yoshida4" => Some(Scheme::Yoshida4),
            _ => None,
        }
    }
}

/// Output time grid and integrator settings shared by all trajectory methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub substeps: usize,
    pub scheme: Scheme,
}

impl PropagationConfig {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        Self { dt, n_steps, substeps: 2, scheme: Scheme::Yoshida4 }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Total simulation window `T = n_steps · dt`.
    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reusable integrator with scratch buffers; one per worker.
pub struct Propagator<'a, P: Potential + ?Sized> {
    pot: &'a P,
    widths: WidthTable,
    substeps: usize,
    scheme: Scheme,
    grad: Vec<f64>,
    hess: Vec<f64>,
    potential: f64,
    det_buf: Vec<Complex64>,
}

impl<'a, P: Potential + ?Sized> Propagator<'a, P> {
    pub fn new(pot: &'a P, gamma: &[f64], substeps: usize, scheme: Scheme) -> Result<Self> {
        let f = pot.dim();
        if gamma.len() != f {
            return Err(Error::DimensionMismatch { expected: f, got: gamma.len() });
        }
        if substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        Ok(Self {
            pot,
            widths: WidthTable::new(gamma),
            substeps,
            scheme,
            grad: vec![0.0; f],
            hess: vec![0.0; f * f],
            potential: 0.0,
            det_buf: vec![Complex64::default(); f * f],
        })
    }

    pub fn from_config(pot: &'a P, gamma: &[f64], cfg: &PropagationConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(pot, gamma, cfg.substeps, cfg.scheme)
    }

    fn refresh_forces(&mut self, q: &[f64]) {
        self.potential = self.pot.evaluate(q, &mut self.grad, &mut self.hess);
    }

    /// Advances `state` by `dt`.
    pub fn step(&mut self, state: &mut TrajectoryState, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if state.point.dim() != self.pot.dim() {
            return Err(Error::DimensionMismatch { expected: self.pot.dim(), got: state.point.dim() });
        }
        self.refresh_forces(&state.point.q);
        let h = dt / self.substeps as f64;
        let t0 = state.t;
        for sub in 0..self.substeps {
            for &w in self.scheme.weights() {
                self.verlet(state, w * h)?;
                self.track_phase(state)?;
            }
            state.t = t0 + (sub + 1) as f64 * h;
        }
        Ok(())
    }

    fn verlet(&mut self, state: &mut TrajectoryState, h: f64) -> Result<()> {
        let f = self.pot.dim();
        let n = 2 * f;
        let masses = self.pot.masses();
        let TrajectoryState { point, mono, .. } = state;
        let m = &mut mono.m;

        kick(&mut point.p, &self.grad, m, &self.hess, f, 0.5 * h);
        let mut kinetic = 0.0;
        let (mq, mp) = m.split_at_mut(f * n);
        for i in 0..f {
            let inv_m = 1.0 / masses[i];
            point.q[i] += h * point.p[i] * inv_m;
            kinetic += point.p[i] * point.p[i] * 0.5 * inv_m;
            let c = h * inv_m;
            for (x, y) in mq[i * n..(i + 1) * n].iter_mut().zip(&mp[i * n..(i + 1) * n]) {
                *x += c * y;
            }
        }
        let v_old = self.potential;
        self.refresh_forces(&point.q);
        kick(&mut point.p, &self.grad, m, &self.hess, f, 0.5 * h);
        state.action += h * (kinetic - 0.5 * (v_old + self.potential));

        if !(self.potential.is_finite() && self.grad.iter().all(|g| g.is_finite()) && state.point.is_finite()) {
            return Err(Error::TrajectoryEscaped { t: state.t });
        }
        Ok(())
    }

    fn track_phase(&mut self, state: &mut TrajectoryState) -> Result<()> {
        let d = self.widths.det(&state.mono.m, &mut self.det_buf);
        if too_small(d) {
            return Err(Error::PrefactorUnderflow { t: state.t });
        }
        let increment = (d * state.last_det.conj()).arg();
        if increment.abs() >= FRAC_PI_2 {
            return Err(Error::PhaseDiscontinuity { increment, t: state.t });
        }
        state.phase += 0.5 * increment * HBAR;
        state.last_det = d;
        Ok(())
    }

    /// Propagates `initial` and calls `visit(k, state)` at `t_k = k·dt` for
    /// `k = 0..n_steps`.
    pub fn run(
        &mut self,
        initial: PhasePoint,
        n_steps: usize,
        dt: f64,
        mut visit: impl FnMut(usize, &TrajectoryState) -> Result<()>,
    ) -> Result<TrajectoryState> {
        let mut state = TrajectoryState::new(initial);
        for k in 0..n_steps {
            if k > 0 {
                self.step(&mut state, dt)?;
                // keep sample times on the exact grid
                state.t = k as f64 * dt;
            }
            visit(k, &state)?;
        }
        Ok(state)
    }
}

/// `p -= s·∇V`, `M_p -= s·H·M_q`.
#[inline]
fn kick(p: &mut [f64], grad: &[f64], m: &mut [f64], hess: &[f64], f: usize, s: f64) {
    let n = 2 * f;
    for i in 0..f {
        p[i] -= s * grad[i];
    }
    let (mq, mp) = m.split_at_mut(f * n);
    for (i, row) in mp.chunks_exact_mut(n).enumerate() {
        for (k, &hik) in hess[i * f..(i + 1) * f].iter().enumerate() {
            if hik == 0.0 {
                continue;
            }
            let coef = s * hik;
            for (x, y) in row.iter_mut().zip(&mq[k * n..(k + 1) * n]) {
                *x -= coef * y;
            }
        }
    }
}

/// One step of length `dt` from `state`, using the model's widths and a single
/// fourth-order substep.
pub fn step(model: &ModelSpec, state: &TrajectoryState, dt: f64) -> Result<TrajectoryState> {
    let mut prop = Propagator::new(model, &model.gamma, 1, Scheme::Yoshida4)?;
    let mut next = state.clone();
    prop.step(&mut next, dt)?;
    Ok(next)
}
