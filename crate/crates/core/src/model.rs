//! Potentials and the Caldeira-Leggett system-bath model.
//!
//! Atomic units with `ħ = 1` throughout. Degree of freedom 0 is the system
//! coordinate `s`; indices `1..F` are the bath coordinates `y_i` (unit mass).

use std::f64::consts::PI;

use crate::dynamics::PhasePoint;
use crate::error::{invalid, Error, Result};

pub const HBAR: f64 = 1.0;

/// Description of the bath discretization, recorded in run metadata.
pub const BATH_CONVENTION: &str =
    "equidistant ohmic: omega_i = i*omega_c/n, c_i = omega_i*sqrt(2*eta*d_omega*exp(-omega_i/omega_c)/pi), eta = eta_eff*m_s*omega_s";

/// Anything the classical integrator and the grid propagator can act on.
pub trait Potential: Sync {
    fn dim(&self) -> usize;
    fn masses(&self) -> &[f64];
    fn value(&self, q: &[f64]) -> f64;
    fn gradient(&self, q: &[f64], out: &mut [f64]);
    /// Row-major `F x F` Hessian.
    fn hessian(&self, q: &[f64], out: &mut [f64]);

    /// Value, gradient and Hessian in one pass.
    fn evaluate(&self, q: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        self.gradient(q, grad);
        self.hessian(q, hess);
        self.value(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseParams {
    pub de: f64,
    pub re: f64,
    pub alpha: f64,
    pub mass: f64,
}

impl MorseParams {
    pub fn new(de: f64, re: f64, alpha: f64, mass: f64) -> Result<Self> {
        let p = Self { de, re, alpha, mass };
        p.validate()?;
        Ok(p)
    }

    /// Iodine-like parameters: `D_e = 0.057`, `r_e = 0`, `α = 0.983`, `M = 1.165e5`.
    pub fn iodine() -> Self {
        Self { de: 0.057, re: 0.0, alpha: 0.983, mass: 1.165e5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.de > 0.0 && self.alpha > 0.0 && self.mass > 0.0 && self.re.is_finite()) {
            return Err(invalid(format!("Morse parameters must satisfy De, alpha, mass > 0: {self:?}")));
        }
        let w = self.omega();
        if !(w.is_finite() && w > 0.0) {
            return Err(invalid("Morse harmonic frequency is not finite"));
        }
        Ok(())
    }

    /// Harmonic frequency at the well bottom, `sqrt(2 D_e α² / m)`.
    pub fn omega(&self) -> f64 {
        (2.0 * self.de * self.alpha * self.alpha / self.mass).sqrt()
    }

    pub fn energy(&self, r: f64) -> f64 {
        let x = 1.0 - (-self.alpha * (r - self.re)).exp();
        self.de * x * x
    }

    fn derivative(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.re)).exp();
        2.0 * self.de * self.alpha * (1.0 - e) * e
    }

    fn second_derivative(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.re)).exp();
        2.0 * self.de * self.alpha * self.alpha * e * (2.0 * e - 1.0)
    }

    fn all(&self, r: f64) -> (f64, f64, f64) {
        let e = (-self.alpha * (r - self.re)).exp();
        let x = 1.0 - e;
        (
            self.de * x * x,
            2.0 * self.de * self.alpha * x * e,
            2.0 * self.de * self.alpha * self.alpha * e * (2.0 * e - 1.0),
        )
    }
}

/// `D_e (1 - exp(-α (r - r_e)))²`.
pub fn morse_energy(params: &MorseParams, r: f64) -> f64 {
    params.energy(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicParams {
    pub mass: f64,
    pub omega: f64,
    pub center: f64,
}

/// The one-dimensional system potential `V_s(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemPotential {
    Morse(MorseParams),
    Harmonic(HarmonicParams),
}

impl SystemPotential {
    pub fn harmonic(mass: f64, omega: f64) -> Result<Self> {
        if !(mass > 0.0 && omega > 0.0) {
            return Err(invalid("harmonic oscillator needs mass > 0 and omega > 0"));
        }
        Ok(Self::Harmonic(HarmonicParams { mass, omega, center: 0.0 }))
    }

    pub fn mass(&self) -> f64 {
        match self {
            Self::Morse(m) => m.mass,
            Self::Harmonic(h) => h.mass,
        }
    }

    /// Harmonic frequency of the well.
    pub fn omega(&self) -> f64 {
        match self {
            Self::Morse(m) => m.omega(),
            Self::Harmonic(h) => h.omega,
        }
    }

    pub fn equilibrium(&self) -> f64 {
        match self {
            Self::Morse(m) => m.re,
            Self::Harmonic(h) => h.center,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Morse(m) => m.energy(s),
            Self::Harmonic(h) => 0.5 * h.mass * h.omega * h.omega * (s - h.center).powi(2),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Morse(m) => m.derivative(s),
            Self::Harmonic(h) => h.mass * h.omega * h.omega * (s - h.center),
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        match self {
            Self::Morse(m) => m.second_derivative(s),
            Self::Harmonic(h) => h.mass * h.omega * h.omega,
        }
    }

    /// `(V, V', V'')` at `s`.
    pub fn derivatives(&self, s: f64) -> (f64, f64, f64) {
        match self {
            Self::Morse(m) => m.all(s),
            Self::Harmonic(_) => (self.value(s), self.derivative(s), self.second_derivative(s)),
        }
    }
}

/// Discretized harmonic bath: frequencies `ω_i` and bilinear couplings `c_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub omega: Vec<f64>,
    pub coupling: Vec<f64>,
    pub eta_eff: f64,
    pub omega_c: f64,
}

impl BathSpec {
    pub fn none() -> Self {
        Self { omega: Vec::new(), coupling: Vec::new(), eta_eff: 0.0, omega_c: 0.0 }
    }

    pub fn count(&self) -> usize {
        self.omega.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega.len() != self.coupling.len() {
            return Err(invalid("bath frequency and coupling lists differ in length"));
        }
        if self.omega.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid("bath frequencies must be positive"));
        }
        if self.omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("bath frequencies must be strictly increasing"));
        }
        if !(self.eta_eff >= 0.0) {
            return Err(invalid("eta_eff must be non-negative"));
        }
        Ok(())
    }

    /// Zero-point energy of the uncoupled bath, `Σ ω_i / 2`.
    pub fn zero_point_energy(&self) -> f64 {
        self.omega.iter().sum::<f64>() * HBAR / 2.0
    }
}

/// Ohmic bath with exponential cutoff on an equidistant frequency grid
/// `ω_i = i ω_c / n`.
pub fn discretize_bath(count: usize, omega_c: f64, eta_eff: f64, system: &SystemPotential) -> Result<BathSpec> {
    if count < 1 {
        return Err(invalid("a discretized bath needs at least one oscillator"));
    }
    if !(omega_c > 0.0) {
        return Err(invalid("cutoff frequency must be positive"));
    }
    if !(eta_eff >= 0.0) {
        return Err(invalid("eta_eff must be non-negative"));
    }
    let eta = eta_eff * system.mass() * system.omega();
    let d_omega = omega_c / count as f64;
    let omega: Vec<f64> = (1..=count).map(|i| i as f64 * d_omega).collect();
    let coupling = omega.iter().map(|&w| w * (2.0 * eta * d_omega * (-w / omega_c).exp() / PI).sqrt()).collect();
    Ok(BathSpec { omega, coupling, eta_eff, omega_c })
}

/// Full model record consumed by every propagator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub system: SystemPotential,
    pub bath: BathSpec,
    masses: Vec<f64>,
    pub gamma: Vec<f64>,
    pub ref_center: PhasePoint,
}

impl ModelSpec {
    /// Builds the model with harmonic-approximation widths and the reference
    /// state at equilibrium carrying one quantum of zero-point momentum per DOF.
    pub fn new(system: SystemPotential, bath: BathSpec) -> Result<Self> {
        if let SystemPotential::Morse(m) = &system {
            m.validate()?;
        }
        bath.validate()?;
        let mut masses = vec![system.mass()];
        masses.extend(std::iter::repeat_n(1.0, bath.count()));
        let mut model = Self { system, bath, masses, gamma: Vec::new(), ref_center: PhasePoint::zeros(0) };
        model.gamma = default_widths(&model);
        model.ref_center = model.default_ref_center();
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        1 + self.bath.count()
    }

    fn default_ref_center(&self) -> PhasePoint {
        let f = self.dim();
        let mut q = vec![0.0; f];
        let mut p = vec![0.0; f];
        q[0] = self.system.equilibrium();
        p[0] = (self.system.mass() * self.system.omega() * HBAR).sqrt();
        for (i, &w) in self.bath.omega.iter().enumerate() {
            p[i + 1] = (w * HBAR).sqrt();
        }
        PhasePoint { q, p }
    }

    pub fn with_ref_center(mut self, center: PhasePoint) -> Result<Self> {
        if center.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: center.dim() });
        }
        self.ref_center = center;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: gamma.len() });
        }
        if gamma.iter().any(|&g| !(g > 0.0)) {
            return Err(invalid("Gaussian widths must be positive"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// Harmonic frequency of every DOF in the uncoupled limit.
    pub fn harmonic_frequencies(&self) -> Vec<f64> {
        let mut w = vec![self.system.omega()];
        w.extend_from_slice(&self.bath.omega);
        w
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: n });
        }
        Ok(())
    }
}

impl Potential for ModelSpec {
    fn dim(&self) -> usize {
        ModelSpec::dim(self)
    }

    fn masses(&self) -> &[f64] {
        &self.masses
    }

    fn value(&self, q: &[f64]) -> f64 {
        let ds = q[0] - self.system.equilibrium();
        let mut v = self.system.value(q[0]);
        for (i, (&w, &c)) in self.bath.omega.iter().zip(&self.bath.coupling).enumerate() {
            let b = w * q[i + 1] + c / w * ds;
            v += 0.5 * b * b;
        }
        v
    }

    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let ds = q[0] - self.system.equilibrium();
        out[0] = self.system.derivative(q[0]);
        for (i, (&w, &c)) in self.bath.omega.iter().zip(&self.bath.coupling).enumerate() {
            let b = w * q[i + 1] + c / w * ds;
            out[0] += c / w * b;
            out[i + 1] = w * b;
        }
    }

    fn hessian(&self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[0] = self.system.second_derivative(q[0]);
        self.bath_hessian(out);
    }

    fn evaluate(&self, q: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let ds = q[0] - self.system.equilibrium();
        let (mut v, d, d2) = self.system.derivatives(q[0]);
        grad[0] = d;
        for (i, (&w, &c)) in self.bath.omega.iter().zip(&self.bath.coupling).enumerate() {
            let b = w * q[i + 1] + c / w * ds;
            v += 0.5 * b * b;
            grad[0] += c / w * b;
            grad[i + 1] = w * b;
        }
        if self.bath.count() > 0 {
            hess.iter_mut().for_each(|x| *x = 0.0);
        }
        hess[0] = d2;
        self.bath_hessian(hess);
        v
    }
}

impl ModelSpec {
    fn bath_hessian(&self, out: &mut [f64]) {
        let f = self.dim();
        for (i, (&w, &c)) in self.bath.omega.iter().zip(&self.bath.coupling).enumerate() {
            let k = i + 1;
            out[0] += (c / w) * (c / w);
            out[k] = c;
            out[k * f] = c;
            out[k * f + k] = w * w;
        }
    }
}

/// `V_s(s) + Σ_i ½ [ω_i y_i + (c_i/ω_i)(s - s_eq)]²`.
pub fn cl_potential(model: &ModelSpec, q: &[f64]) -> Result<f64> {
    model.check_dim(q.len())?;
    Ok(model.value(q))
}

pub fn cl_gradient(model: &ModelSpec, q: &[f64]) -> Result<Vec<f64>> {
    model.check_dim(q.len())?;
    let mut g = vec![0.0; q.len()];
    model.gradient(q, &mut g);
    Ok(g)
}

/// Row-major `F x F` Hessian.
pub fn cl_hessian(model: &ModelSpec, q: &[f64]) -> Result<Vec<f64>> {
    model.check_dim(q.len())?;
    let mut h = vec![0.0; q.len() * q.len()];
    model.hessian(q, &mut h);
    Ok(h)
}

/// `γ_s = m_s ω_s / ħ` for the system; `γ_i = ω_i / ħ` for unit-mass bath modes.
pub fn default_widths(model: &ModelSpec) -> Vec<f64> {
    let mut g = vec![model.system.mass() * model.system.omega() / HBAR];
    g.extend(model.bath.omega.iter().map(|w| w / HBAR));
    g
}
