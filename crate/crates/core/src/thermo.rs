//! Thermodynamic-limit energies: Fourier kernels, the bulk root density,
//! boundary-string selection and the assembled surface and excitation
//! energies.
//!
//! Real `η` strings are written in the rotated coordinate `z̄ = −i z`, so the
//! bulk sits on `Im z̄ = 1/2` and the second string family on
//! `Re z̄ = Im τ / 2`. Imaginary `η` strings use `z` directly.
//!
//! Every infinite series is split into a closed-form geometric part and a
//! remainder whose terms decay like `e^{−2k·min(A, C)}`. Band-edge strings
//! give geometric ratios of modulus one; ratio `−1` is summed in the Abel
//! sense and ratio `+1` is reported as divergent.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::elliptic::{sigma, sigma_prime, zeta, LatticeTau, C64};
use crate::error::{Error, Result};
use crate::lattice::{EtaKind, ModelParams, Side};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Imaginary parts below this count as zero in the sign function `sI`.
pub const SIGN_TOL: f64 = 1e-12;
const REGION_TOL: f64 = 1e-12;
const REAL_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Series truncation: stop once five consecutive terms fall below
/// `eps` times the running magnitude, and give up after `kmax` terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub eps: f64,
    pub kmax: usize,
}

impl Truncation {
    pub const DEFAULT_KMAX: usize = 1_000_000;

    pub fn new(eps: f64, kmax: usize) -> Self {
        Self { eps, kmax }
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            eps: 1e-16,
            kmax: Self::DEFAULT_KMAX,
        }
    }
}

impl From<f64> for Truncation {
    fn from(eps: f64) -> Self {
        Self {
            eps,
            kmax: Self::DEFAULT_KMAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubRegime {
    /// Real `η ∈ (1/2, 1)` or `Im η ∈ (Im τ/2, Im τ)`.
    Large,
    /// Real `η ∈ (0, 1/2)` or `Im η ∈ (0, Im τ/2)`.
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: usize) -> Self {
        if n.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    /// `(1 − (−1)^N)/2`.
    pub fn odd_weight(self) -> f64 {
        match self {
            Parity::Even => 0.0,
            Parity::Odd => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateKind {
    Ground,
    FirstExcited,
}

/// Selects the root-pattern laws that apply to a parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegimeDispatch {
    pub eta_kind: EtaKind,
    pub sub: SubRegime,
    pub parity: Parity,
    pub state_kind: StateKind,
}

impl RegimeDispatch {
    pub fn new(p: &ModelParams, parity: Parity, state_kind: StateKind) -> Result<Self> {
        Ok(Self {
            eta_kind: p.eta_kind,
            sub: sub_regime(p)?,
            parity,
            state_kind,
        })
    }

    /// Dispatch whose parity is that of `p.n_sites`.
    pub fn for_chain(p: &ModelParams, state_kind: StateKind) -> Result<Self> {
        Self::new(p, Parity::of(p.n_sites), state_kind)
    }

    pub fn with_state(self, state_kind: StateKind) -> Self {
        Self { state_kind, ..self }
    }

    pub fn with_parity(self, parity: Parity) -> Self {
        Self { parity, ..self }
    }

    fn check(&self, p: &ModelParams) -> Result<()> {
        let expected = Self::new(p, self.parity, self.state_kind)?;
        if expected != *self {
            return Err(Error::Domain(format!(
                "dispatch {self:?} does not match the parameters"
            )));
        }
        Ok(())
    }
}

fn require_imaginary_tau(tau: LatticeTau) -> Result<()> {
    if tau.value().re.abs() > REGION_TOL {
        return Err(Error::Domain(format!(
            "thermodynamic formulas need pure imaginary tau, got {}",
            tau.value()
        )));
    }
    Ok(())
}

/// Large or small crossing parameter; the midpoint is rejected because the
/// root patterns change across it.
pub fn sub_regime(p: &ModelParams) -> Result<SubRegime> {
    require_imaginary_tau(p.tau)?;
    let (x, half) = match p.eta_kind {
        EtaKind::Real => (p.eta.re, 0.5),
        EtaKind::PureImaginary => (p.eta.im, p.tau.height() / 2.0),
    };
    if (x - half).abs() <= REGION_TOL {
        return Err(Error::Domain(format!(
            "eta = {} sits on the regime boundary",
            p.eta
        )));
    }
    Ok(if x > half {
        SubRegime::Large
    } else {
        SubRegime::Small
    })
}

/// Three-way sign of the imaginary part.
pub fn im_sign(z: C64) -> i32 {
    if z.im.abs() <= SIGN_TOL {
        0
    } else if z.im > 0.0 {
        1
    } else {
        -1
    }
}

// ---------------------------------------------------------------------------
// Fourier kernels

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// `ζ(i(u−γ)) + ζ(i(u+γ)) − 4πu/τ`, period `Im τ`.
    A,
    /// `ζ(i(u−γ)) − ζ(i(u+γ))`, period `Im τ`.
    B,
    /// `ζ(u−ξ) + ζ(u+ξ)`, period 1.
    C,
    /// `ζ(u−ξ) − ζ(u+ξ)`, period 1.
    D,
}

/// `cosh(y)·coth(x) + s·sinh(y)` for `Re x > 0` without cancellation.
fn even_bracket(y: C64, x: f64, s: i32) -> C64 {
    let q = (-2.0 * x).exp();
    let (ep, em) = (y.exp(), (-y).exp());
    match s {
        1 => (ep + em * q) / (1.0 - q),
        -1 => (em + ep * q) / (1.0 - q),
        _ => (ep + em) * (1.0 + q) / (2.0 * (1.0 - q)),
    }
}

/// `sinh(y)·coth(x) + s·cosh(y)` for `Re x > 0` without cancellation.
fn odd_bracket(y: C64, x: f64, s: i32) -> C64 {
    let q = (-2.0 * x).exp();
    let (ep, em) = (y.exp(), (-y).exp());
    match s {
        1 => (ep - em * q) / (1.0 - q),
        -1 => (ep * q - em) / (1.0 - q),
        _ => (ep - em) * (1.0 + q) / (2.0 * (1.0 - q)),
    }
}

/// Fourier coefficient `∫ F(x) e^{−ikπx/T} dx` over one period `2T` of the
/// kernel with the given shift.
pub fn kernel_fourier(kind: KernelKind, shift: C64, k: i64, tau: LatticeTau) -> Result<C64> {
    require_imaginary_tau(tau)?;
    let h = tau.height();
    let in_strip = match kind {
        KernelKind::A | KernelKind::B => {
            shift.im.abs() <= 1.0 + REGION_TOL && shift.re.abs() <= h / 2.0 + REGION_TOL
        }
        KernelKind::C | KernelKind::D => {
            shift.im.abs() <= h + REGION_TOL && shift.re.abs() <= 0.5 + REGION_TOL
        }
    };
    if !in_strip {
        return Err(Error::Domain(format!(
            "kernel {kind:?} shift {shift} outside its strip"
        )));
    }
    let s = im_sign(shift);
    if k == 0 {
        return Ok(match kind {
            KernelKind::A | KernelKind::C => c(0.0, 0.0),
            KernelKind::B => 2.0 * PI * (2.0 * shift * I + s as f64),
            KernelKind::D => 2.0 * PI * I * s as f64,
        });
    }
    let kk = k.unsigned_abs() as f64;
    let odd_in_k = if k < 0 { -1.0 } else { 1.0 };
    Ok(match kind {
        KernelKind::A => {
            let kappa = PI / h;
            -2.0 * PI * even_bracket(2.0 * I * kappa * kk * shift, kappa * kk, s) * odd_in_k
        }
        KernelKind::B => {
            let kappa = PI / h;
            2.0 * PI * odd_bracket(2.0 * I * kappa * kk * shift, kappa * kk, s)
        }
        KernelKind::C => {
            -2.0 * PI * I * even_bracket(2.0 * I * PI * kk * shift, PI * h * kk, s) * odd_in_k
        }
        KernelKind::D => 2.0 * PI * I * odd_bracket(2.0 * I * PI * kk * shift, PI * h * kk, s),
    })
}

/// Moves a density-kernel shift into its strip using the periods of the
/// A and C kernels in the shift variable.
fn reduce_shift(kind: EtaKind, shift: C64, tau: LatticeTau) -> C64 {
    let h = tau.height();
    let wrap = |x: f64, period: f64, half: f64| {
        let mut x = x;
        while x > half + REGION_TOL {
            x -= period;
        }
        while x < -half - REGION_TOL {
            x += period;
        }
        x
    };
    match kind {
        EtaKind::Real => c(wrap(shift.re, h, h / 2.0), wrap(shift.im, 1.0, 1.0)),
        EtaKind::PureImaginary => c(wrap(shift.re, 1.0, 0.5), wrap(shift.im, h, h)),
    }
}

fn density_kernel(kind: EtaKind, shift: C64, k: i64, tau: LatticeTau) -> Result<C64> {
    let kernel = match kind {
        EtaKind::Real => KernelKind::A,
        EtaKind::PureImaginary => KernelKind::C,
    };
    kernel_fourier(kernel, reduce_shift(kind, shift, tau), k, tau)
}

/// Fourier mode `ρ̃(k)` of the bulk root density for the dispatch's regime.
///
/// The `k = 0` mode is fixed by the number of bulk roots: every root not in
/// `strings` lies in the bulk, each bulk line root and its negative both
/// count, and a conjugate pair counts once.
pub fn bulk_density_fourier(
    d: &RegimeDispatch,
    p: &ModelParams,
    strings: &StringSet,
    k: i64,
) -> Result<C64> {
    d.check(p)?;
    let n = p.n_sites as f64;
    let per_root = match d.sub {
        SubRegime::Large => 1.0,
        SubRegime::Small => 2.0,
    };
    if k == 0 {
        let bulk = (p.n_sites + 3) as f64 - strings.root_count() as f64;
        return Ok(c(2.0 * bulk / (n * per_root), 0.0));
    }
    let (eta, t) = (p.eta, p.tau.value());
    let kind = p.eta_kind;
    // Real shifts enter the A kernel multiplied by i.
    let rot = match kind {
        EtaKind::Real => I,
        EtaKind::PureImaginary => c(1.0, 0.0),
    };
    let denominator: Vec<C64> = match (kind, d.sub) {
        (EtaKind::Real, SubRegime::Large) => vec![(1.0 - eta) / 2.0 * I],
        (EtaKind::Real, SubRegime::Small) => vec![eta / 2.0 * I, 1.5 * eta * I],
        (EtaKind::PureImaginary, SubRegime::Large) => vec![(t - eta) / 2.0],
        (EtaKind::PureImaginary, SubRegime::Small) => vec![1.5 * eta, eta / 2.0],
    };
    let mut numerator: Vec<(f64, C64)> = vec![(2.0 * n + 1.0, eta * rot)];
    for side in [Side::Minus, Side::Plus] {
        for a in p.alpha(side) {
            numerator.push((1.0, a * rot));
        }
    }
    let (second, fourth) = match (kind, d.sub) {
        (EtaKind::Real, SubRegime::Large) => ((eta + 0.5) * I, (eta + (t - 1.0) / 2.0) * I),
        (EtaKind::Real, SubRegime::Small) => ((eta + 0.5) * I, (eta + (1.0 + t) / 2.0) * I),
        (EtaKind::PureImaginary, SubRegime::Large) => (eta + 0.5, eta + (1.0 - t) / 2.0),
        (EtaKind::PureImaginary, SubRegime::Small) => (eta + 0.5, eta + (1.0 + t) / 2.0),
    };
    numerator.push((1.0, second));
    numerator.push((1.0, (eta + t / 2.0) * rot));
    numerator.push((1.0, fourth));
    for sh in [
        eta / 2.0,
        (eta + 1.0) / 2.0,
        (eta + t) / 2.0,
        (eta + 1.0 + t) / 2.0,
    ] {
        numerator.push((-1.0, sh * rot));
    }
    let half_eta = eta / 2.0 * rot;
    for w in strings.all() {
        numerator.push((-1.0, w - half_eta));
        numerator.push((-1.0, w + half_eta));
    }
    let mut den = c(0.0, 0.0);
    for sh in denominator {
        den += density_kernel(kind, sh, k, p.tau)?;
    }
    if den.norm() == 0.0 || !den.is_finite() {
        return Err(Error::Pole(format!(
            "density denominator vanishes at k = {k}"
        )));
    }
    let mut num = c(0.0, 0.0);
    for (w, sh) in numerator {
        num += w * density_kernel(kind, sh, k, p.tau)?;
    }
    Ok(num / (n * den))
}

// ---------------------------------------------------------------------------
// Series

/// Closed form of `Σ_{k≥1} ρ^k`, Abel-summed on the unit circle.
pub(crate) fn geometric(rho: C64) -> Result<C64> {
    if rho.norm() > 1.0 + 1e-12 || (1.0 - rho).norm() < 1e-9 {
        return Err(Error::Divergence(format!(
            "geometric ratio {rho} on or outside the unit circle"
        )));
    }
    Ok(rho / (1.0 - rho))
}

/// Running sum of a remainder series with the five-term stopping rule.
pub(crate) struct Remainder {
    pub(crate) sum: C64,
    quiet: usize,
}

impl Remainder {
    pub(crate) fn new() -> Self {
        Self {
            sum: c(0.0, 0.0),
            quiet: 0,
        }
    }

    /// Adds a term; true once the series has converged.
    pub(crate) fn push(&mut self, term: C64, scale: f64, eps: f64) -> bool {
        self.sum += term;
        let bound = eps * (scale + self.sum.norm());
        if term.norm() <= bound {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.quiet >= 5
    }
}

/// One `cosh` term of a hyperbolic series: `weight · cosh(k·arg) · (±1)^k`.
#[derive(Clone, Copy, Debug)]
struct CoshTerm {
    weight: f64,
    arg: C64,
    alternating: bool,
}

fn cosh_term(weight: f64, arg: C64, alternating: bool) -> CoshTerm {
    CoshTerm {
        weight,
        arg,
        alternating,
    }
}

/// `Σ_{k≥1} tanh(kA)/sinh(kC) · Σ_j w_j cosh(k a_j) (±1)^k`.
fn tanh_sinh_series(a: C64, cc: C64, terms: &[CoshTerm], tr: Truncation) -> Result<C64> {
    let (mut a, mut cc, mut sign) = (a, cc, 1.0);
    if a.re < 0.0 {
        a = -a;
        sign = -sign;
    }
    if cc.re < 0.0 {
        cc = -cc;
        sign = -sign;
    }
    if !(a.re > 0.0 && cc.re > 0.0) {
        return Err(Error::Divergence(format!(
            "hyperbolic series with tanh rate {a} and sinh rate {cc}"
        )));
    }
    let mut ratios = Vec::with_capacity(2 * terms.len());
    let mut head = c(0.0, 0.0);
    for t in terms {
        let alt = if t.alternating { -1.0 } else { 1.0 };
        for s in [1.0, -1.0] {
            let rho = alt * (s * t.arg - cc).exp();
            head += t.weight * geometric(rho)?;
            ratios.push((t.weight, rho));
        }
    }
    let (qa, qc) = ((-2.0 * a).exp(), (-2.0 * cc).exp());
    let (mut qak, mut qck) = (c(1.0, 0.0), c(1.0, 0.0));
    let mut powers: Vec<C64> = vec![c(1.0, 0.0); ratios.len()];
    let mut rem = Remainder::new();
    for _ in 0..tr.kmax {
        qak *= qa;
        qck *= qc;
        let g = (-2.0 * qak / (1.0 + qak) + qck) / (1.0 - qck);
        let mut inner = c(0.0, 0.0);
        for (pw, (w, rho)) in powers.iter_mut().zip(&ratios) {
            *pw *= rho;
            inner += *w * *pw;
        }
        if rem.push(g * inner, head.norm(), tr.eps) {
            return Ok(sign * (head + rem.sum));
        }
    }
    Err(Error::Divergence(format!(
        "no convergence within {} terms",
        tr.kmax
    )))
}

/// `Σ_{k∈ℤ} cosh(k·y)/cosh(k·x)`.
pub(crate) fn cosh_sech_series(y: C64, x: C64, tr: Truncation) -> Result<C64> {
    let x = if x.re < 0.0 { -x } else { x };
    if x.re.is_nan() || x.re <= 0.0 {
        return Err(Error::Pole(format!("sech rate {x} has no decay")));
    }
    let ratios = [(y - x).exp(), (-y - x).exp()];
    let mut head = c(0.0, 0.0);
    for &rho in &ratios {
        head += geometric(rho)?;
    }
    let q = (-2.0 * x).exp();
    let mut qk = c(1.0, 0.0);
    let mut powers = [c(1.0, 0.0); 2];
    let mut rem = Remainder::new();
    for _ in 0..tr.kmax {
        qk *= q;
        let mut inner = c(0.0, 0.0);
        for (pw, rho) in powers.iter_mut().zip(&ratios) {
            *pw *= rho;
            inner += *pw;
        }
        if rem.push(-inner * qk / (1.0 + qk), head.norm(), tr.eps) {
            return Ok(1.0 + 2.0 * (head + rem.sum));
        }
    }
    Err(Error::Divergence(format!(
        "no convergence within {} terms",
        tr.kmax
    )))
}

fn real_part(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > REAL_TOL * z.re.abs().max(1.0) || !z.is_finite() {
        return Err(Error::Numeric(format!("{what} is not real: {z}")));
    }
    Ok(z.re)
}

/// `σ(η)/σ'(0)`, the overall energy scale.
pub fn energy_scale(p: &ModelParams) -> C64 {
    sigma(p.eta, p.tau) / sigma_prime(c(0.0, 0.0), p.tau)
}

/// `iπ/τ`, real and positive for pure imaginary τ.
fn kappa(p: &ModelParams) -> f64 {
    PI / p.tau.height()
}

// ---------------------------------------------------------------------------
// Energy components

/// Bulk energy per site.
pub fn bulk_energy_density(
    d: &RegimeDispatch,
    p: &ModelParams,
    tr: impl Into<Truncation>,
) -> Result<f64> {
    d.check(p)?;
    let tr = tr.into();
    let (eta, t, s) = (p.eta, p.tau.value(), energy_scale(p));
    let value = match p.eta_kind {
        EtaKind::Real => {
            let kap = kappa(p);
            let sum = tanh_sinh_series(
                kap * eta,
                c(kap, 0.0),
                &[cosh_term(1.0, kap * (1.0 - 2.0 * eta), false)],
                tr,
            )?;
            -s * (4.0 * kap * sum + 2.0 * kap * eta + zeta(eta, p.tau)?)
        }
        EtaKind::PureImaginary => {
            let x = I * PI;
            let sum = tanh_sinh_series(
                x * eta,
                x * t,
                &[cosh_term(1.0, x * (t - 2.0 * eta), false)],
                tr,
            )?;
            s * (4.0 * I * PI * sum - zeta(eta, p.tau)?)
        }
    };
    real_part(value, "bulk energy density")
}

/// Energy of the two free ends, independent of the boundary fields.
pub fn free_boundary_energy(
    d: &RegimeDispatch,
    p: &ModelParams,
    tr: impl Into<Truncation>,
) -> Result<f64> {
    d.check(p)?;
    let tr = tr.into();
    let (eta, t, s) = (p.eta, p.tau.value(), energy_scale(p));
    let tail = sigma_prime(eta, p.tau) / sigma_prime(c(0.0, 0.0), p.tau)
        - 2.0 * s * zeta(2.0 * eta, p.tau)?;
    // The (1 + cos kπ) factor keeps only even k, so the sums run over k = 2m.
    let value = match p.eta_kind {
        EtaKind::Real => {
            let kap = kappa(p);
            let x = 2.0 * kap;
            let e = eta.re;
            let terms = [
                cosh_term(1.0, c(x * (1.0 - 2.0 * e), 0.0), false),
                cosh_term(1.0, c(x * (1.0 - (1.0 - 2.0 * e).abs()), 0.0), false),
                cosh_term(-1.0, c(x * (1.0 - e), 0.0), false),
                cosh_term(-1.0, c(x * e, 0.0), false),
            ];
            -4.0 * kap * s * tanh_sinh_series(x * eta, c(x, 0.0), &terms, tr)? + tail
        }
        EtaKind::PureImaginary => {
            let x = 2.0 * I * PI;
            let fold = t - I * (t - 2.0 * eta).norm();
            let terms = [
                cosh_term(1.0, x * (t - 2.0 * eta), false),
                cosh_term(1.0, x * fold, false),
                cosh_term(-1.0, x * (t - eta), false),
                cosh_term(-1.0, x * eta, false),
            ];
            4.0 * I * PI * s * tanh_sinh_series(x * eta, x * t, &terms, tr)? + tail
        }
    };
    real_part(value, "free boundary energy")
}

/// Energy induced by the boundary field on one side.
pub fn field_boundary_energy(
    d: &RegimeDispatch,
    p: &ModelParams,
    side: Side,
    tr: impl Into<Truncation>,
) -> Result<f64> {
    d.check(p)?;
    let tr = tr.into();
    let (eta, t, s) = (p.eta, p.tau.value(), energy_scale(p));
    let b = p.beta(side);
    let value = match p.eta_kind {
        EtaKind::Real => {
            let kap = kappa(p);
            let terms = [
                cosh_term(1.0, 2.0 * kap * (0.5 - b[0]), false),
                cosh_term(1.0, 2.0 * kap * (0.5 - b[1]), true),
                cosh_term(1.0, 2.0 * kap * b[2], false),
            ];
            -2.0 * kap * s * tanh_sinh_series(kap * eta, c(kap, 0.0), &terms, tr)?
                - 3.0 * kap * eta * s
        }
        EtaKind::PureImaginary => {
            let x = I * PI;
            let terms = [
                cosh_term(1.0, 2.0 * x * (t / 2.0 - b[0]), false),
                cosh_term(1.0, 2.0 * x * b[1], false),
                cosh_term(1.0, 2.0 * x * (t / 2.0 - b[2]), true),
            ];
            2.0 * I * PI * s * tanh_sinh_series(x * eta, x * t, &terms, tr)?
        }
    };
    real_part(value, "boundary field energy")
}

/// `sI(w + η/2) − sI(w − η/2)` in display coordinates.
pub fn band_weight(kind: EtaKind, eta: C64, w: C64) -> i32 {
    let half = match kind {
        EtaKind::Real => eta / 2.0 * I,
        EtaKind::PureImaginary => eta / 2.0,
    };
    im_sign(w + half) - im_sign(w - half)
}

/// Energy carried by one discrete root `w` (display coordinates); exactly
/// zero outside the band `|Im w| ≤ |η|/2`.
pub fn discrete_root_energy(
    d: &RegimeDispatch,
    p: &ModelParams,
    w: C64,
    tr: impl Into<Truncation>,
) -> Result<f64> {
    d.check(p)?;
    root_energy(p, w, tr.into())
}

fn root_energy(p: &ModelParams, w: C64, tr: Truncation) -> Result<f64> {
    let weight = band_weight(p.eta_kind, p.eta, w);
    if weight == 0 {
        return Ok(0.0);
    }
    let s = energy_scale(p);
    let value = match p.eta_kind {
        EtaKind::Real => {
            let kap = kappa(p);
            weight as f64 * s * kap * cosh_sech_series(2.0 * I * kap * w, kap * p.eta, tr)?
        }
        EtaKind::PureImaginary => {
            -I * PI * weight as f64 * s * cosh_sech_series(2.0 * I * PI * w, I * PI * p.eta, tr)?
        }
    };
    real_part(value, "discrete root energy")
}

/// The periodic-chain odd-N correction root: `Im τ/2` (real η) or `1/2`.
pub fn periodic_parity_root(p: &ModelParams) -> C64 {
    match p.eta_kind {
        EtaKind::Real => c(p.tau.height() / 2.0, 0.0),
        EtaKind::PureImaginary => c(0.5, 0.0),
    }
}

// ---------------------------------------------------------------------------
// Canonical region and boundary strings

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= REGION_TOL
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo - REGION_TOL && x <= hi + REGION_TOL
}

/// Maps `β₁` on both sides into the canonical region using the invariant
/// shifts, toggling the string-law parity for the parity-swapping one.
/// Returns the canonical parameters and the parity whose laws apply.
pub fn canonicalize(p: &ModelParams, parity: Parity) -> Result<(ModelParams, Parity)> {
    require_imaginary_tau(p.tau)?;
    let mut q = p.clone();
    let mut law = parity;
    let h = p.tau.height();
    let t = p.tau.value();
    for side in [Side::Minus, Side::Plus] {
        let b = q.beta_mut(side);
        match p.eta_kind {
            EtaKind::Real => {
                if near(b[0].im, h) {
                    b[0] -= t;
                }
                if b[0].re > 1.0 + REGION_TOL && b[0].re < 2.0 {
                    b[0] -= 1.0;
                    law = law.flipped();
                }
                if b[0].re > 0.5 + REGION_TOL && b[0].re <= 1.0 + REGION_TOL {
                    b[0] = 1.0 - b[0];
                }
            }
            EtaKind::PureImaginary => {
                if near(b[0].re, 1.0) {
                    b[0] -= 1.0;
                }
                if b[0].im > h + REGION_TOL && b[0].im < 2.0 * h {
                    b[0] -= t;
                    law = law.flipped();
                }
                if b[0].im > h / 2.0 + REGION_TOL && b[0].im <= h + REGION_TOL {
                    b[0] = t - b[0];
                }
            }
        }
        let ok = match p.eta_kind {
            EtaKind::Real => {
                b[0].re > REGION_TOL
                    && within(b[0].re, 0.0, 0.5)
                    && near(b[0].im, 0.0)
                    && within(b[1].re, 0.0, 0.5)
                    && near(b[1].im, 0.0)
                    && near(b[2].re, 0.0)
                    && within(b[2].im, 0.0, h / 2.0)
            }
            EtaKind::PureImaginary => {
                near(b[0].re, 0.0)
                    && b[0].im > REGION_TOL
                    && within(b[0].im, 0.0, h / 2.0)
                    && within(b[1].re, 0.0, 0.5)
                    && near(b[1].im, 0.0)
                    && near(b[2].re, 0.0)
                    && within(b[2].im, 0.0, h / 2.0)
            }
        };
        if !ok {
            return Err(Error::Domain(format!(
                "boundary parameters {:?} are outside the canonical region",
                p.beta(side)
            )));
        }
    }
    Ok((q, law))
}

/// Discrete roots selected by the root-pattern laws of one dispatch, in
/// display coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StringSet {
    /// The two parameter-independent roots present in every regime.
    pub fixed_pair: [C64; 2],
    /// Selected roots inside the energy-carrying band.
    pub contributing: Vec<C64>,
    /// Selected roots outside the band.
    pub inert: Vec<C64>,
    /// Discrete roots known to exist whose position has no closed form
    /// (the extra even-N root of the small real regime).
    pub unplaced: usize,
    /// Intermediate selector values `φ` (real η) or `ψ` (imaginary η).
    pub helpers: Vec<(String, C64)>,
    /// Parity whose laws were used after canonicalization.
    pub law_parity: Parity,
}

impl StringSet {
    pub fn all(&self) -> impl Iterator<Item = C64> + '_ {
        self.contributing.iter().chain(&self.inert).copied()
    }

    /// Number of discrete roots, placed or not.
    pub fn root_count(&self) -> usize {
        self.contributing.len() + self.inert.len() + self.unplaced
    }
}

/// Scalar positions of the string laws before they are placed on a line.
struct LawInput {
    eta: f64,
    cap: f64,
    m: [f64; 3],
    p: [f64; 3],
}

/// `(β₁-family: [minus, plus], β₂/β₃-family: [minus, plus], helpers)`, each
/// as signed offsets from the family's line.
fn string_offsets(
    sub: SubRegime,
    parity: Parity,
    state: StateKind,
    x: &LawInput,
    second: usize,
) -> ([f64; 2], [f64; 2], Vec<(&'static str, f64)>) {
    let (e, cap) = (x.eta, x.cap);
    let (b1m, b1p) = (x.m[0], x.p[0]);
    let (bm, bp) = (x.m[second], x.p[second]);
    let mut helpers = Vec::new();
    let first = match sub {
        SubRegime::Large => [(e / 2.0 + b1m).min(cap), -(e / 2.0 + b1p).min(cap)],
        SubRegime::Small => {
            let phi2 = (e / 2.0 + b1m).min(e);
            helpers.push(("phi2", phi2));
            [phi2, -(e / 2.0 + b1p).min(2.0 * e - phi2).min(cap)]
        }
    };
    let zero = 0.0_f64;
    let line = match (sub, parity, state) {
        (SubRegime::Large, Parity::Even, StateKind::Ground) => {
            [(e / 2.0 + bm).min(cap), -(e / 2.0 + bp).min(cap)]
        }
        (SubRegime::Large, Parity::Even, StateKind::FirstExcited) => {
            let phi1 = (e / 2.0 - bm).max(e - cap);
            helpers.push(("phi1", phi1));
            [
                phi1,
                -(e / 2.0 - bp).max(2.0 * e - 2.0 * cap - phi1).max(zero),
            ]
        }
        (SubRegime::Large, Parity::Odd, StateKind::Ground) => {
            [(e / 2.0 - bm).max(zero), -(e / 2.0 + bp).min(cap)]
        }
        (SubRegime::Large, Parity::Odd, StateKind::FirstExcited) => [
            (e / 2.0 + bm).min(cap),
            -(e / 2.0 - bp).max(1.5 * e - 2.0 * cap - bm).max(zero),
        ],
        (SubRegime::Small, Parity::Even, StateKind::Ground) => {
            let phi3 = (e / 2.0 + bm).min(e);
            helpers.push(("phi3", phi3));
            [phi3, -(e / 2.0 + bp).min(2.0 * e - phi3).min(cap)]
        }
        (SubRegime::Small, Parity::Even, StateKind::FirstExcited) => {
            [(e / 2.0 - bm).max(zero), -(e / 2.0 - bp).max(zero)]
        }
        (SubRegime::Small, Parity::Odd, StateKind::Ground) => [
            (e / 2.0 - bm).max(zero),
            -(e / 2.0 + bp).min(1.5 * e + bm).min(cap),
        ],
        (SubRegime::Small, Parity::Odd, StateKind::FirstExcited) => {
            [(e / 2.0 + bm).min(cap), -(e / 2.0 - bp).max(zero)]
        }
    };
    (first, line, helpers)
}

/// Boundary strings for a dispatch. Parameters outside the canonical region
/// are first mapped into it; the returned `law_parity` records whether that
/// swapped the parity laws.
pub fn select_boundary_strings(d: &RegimeDispatch, p: &ModelParams) -> Result<StringSet> {
    d.check(p)?;
    let (q, law) = canonicalize(p, d.parity)?;
    Ok(strings_for(&q, d.sub, law, d.state_kind))
}

fn strings_for(q: &ModelParams, sub: SubRegime, law: Parity, state: StateKind) -> StringSet {
    let h = q.tau.height();
    let real = q.eta_kind == EtaKind::Real;
    // Real η: β₁, β₂ are real and the second family sits on Re z̄ = Im τ/2.
    // Imaginary η: β₁, β₃ are imaginary and the second family sits on Re z = 1/2.
    let scalar = |b: [C64; 3]| {
        if real {
            [b[0].re, b[1].re, b[2].im]
        } else {
            [b[0].im, b[1].re, b[2].im]
        }
    };
    let (eta, cap, origin, second) = if real {
        (q.eta.re, 0.5, h / 2.0, 1)
    } else {
        (q.eta.im, h / 2.0, 0.5, 2)
    };
    let input = LawInput {
        eta,
        cap,
        m: scalar(q.beta_minus),
        p: scalar(q.beta_plus),
    };
    let (first, line, helpers) = string_offsets(sub, law, state, &input, second);
    let fixed = if real {
        (1.0 - eta) / 2.0
    } else {
        (h - eta) / 2.0
    };
    let fixed_pair = [c(0.0, fixed), c(origin, fixed)];
    let mut selected = fixed_pair.to_vec();
    selected.extend(first.iter().map(|&v| c(0.0, v)));
    selected.extend(line.iter().map(|&v| c(origin, v)));
    let (contributing, inert) = selected
        .into_iter()
        .partition(|&w| band_weight(q.eta_kind, q.eta, w) != 0);
    let unplaced = usize::from(real && sub == SubRegime::Small && law == Parity::Even);
    let helpers = helpers
        .into_iter()
        .map(|(name, v)| {
            (
                if real {
                    name.to_string()
                } else {
                    name.replace("phi", "psi")
                },
                c(0.0, v),
            )
        })
        .collect();
    StringSet {
        fixed_pair,
        contributing,
        inert,
        unplaced,
        helpers,
        law_parity: law,
    }
}

// ---------------------------------------------------------------------------
// Assembly

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StringEnergy {
    pub position: C64,
    pub energy: f64,
}

/// Components of the open-chain energy beyond `N·e_bulk`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_bulk: f64,
    pub e_free: f64,
    /// Field energy at site 1 (`β⁻`).
    pub e_left: f64,
    /// Field energy at site N (`β⁺`).
    pub e_right: f64,
    pub e_strings: Vec<StringEnergy>,
    /// Odd-N correction of the periodic reference chain (zero for even N).
    pub parity_term: f64,
    /// `e_free + e_left + e_right + Σ e_strings`: the open-chain energy
    /// minus `N·e_bulk`.
    pub total_density_part: f64,
    /// `total_density_part − parity_term`.
    pub surface: f64,
    pub excitation: Option<f64>,
}

impl EnergyBreakdown {
    pub fn strings_total(&self) -> f64 {
        self.e_strings.iter().map(|s| s.energy).sum()
    }

    /// Predicted ground-state energy of a chain of `n` sites.
    pub fn ground_energy(&self, n: usize) -> f64 {
        n as f64 * self.e_bulk + self.total_density_part
    }
}

fn string_energy_total(
    q: &ModelParams,
    strings: &StringSet,
    tr: Truncation,
) -> Result<(Vec<StringEnergy>, f64)> {
    let mut out = Vec::with_capacity(strings.contributing.len());
    let mut total = 0.0;
    for &w in &strings.contributing {
        let energy = root_energy(q, w, tr)?;
        total += energy;
        out.push(StringEnergy {
            position: w,
            energy,
        });
    }
    Ok((out, total))
}

/// Surface energy for a ground-state dispatch. String laws follow the
/// canonicalized parity; the periodic reference uses the dispatch parity,
/// which is the parity of the physical chain.
pub fn surface_energy(
    d: &RegimeDispatch,
    p: &ModelParams,
    tr: impl Into<Truncation>,
) -> Result<EnergyBreakdown> {
    d.check(p)?;
    if d.state_kind != StateKind::Ground {
        return Err(Error::Domain(
            "surface energy needs a ground-state dispatch".into(),
        ));
    }
    let tr = tr.into();
    let (q, law) = canonicalize(p, d.parity)?;
    let strings = strings_for(&q, d.sub, law, StateKind::Ground);
    let e_bulk = bulk_energy_density(d, &q, tr)?;
    let e_free = free_boundary_energy(d, &q, tr)?;
    let e_left = field_boundary_energy(d, &q, Side::Minus, tr)?;
    let e_right = field_boundary_energy(d, &q, Side::Plus, tr)?;
    let (e_strings, strings_total) = string_energy_total(&q, &strings, tr)?;
    let parity_term = if d.parity == Parity::Odd {
        root_energy(&q, periodic_parity_root(&q), tr)?
    } else {
        0.0
    };
    let total_density_part = e_free + e_left + e_right + strings_total;
    Ok(EnergyBreakdown {
        e_bulk,
        e_free,
        e_left,
        e_right,
        e_strings,
        parity_term,
        total_density_part,
        surface: total_density_part - parity_term,
        excitation: None,
    })
}

/// First-excited minus ground energy from the string rearrangement.
pub fn excitation_energy(
    d: &RegimeDispatch,
    p: &ModelParams,
    tr: impl Into<Truncation>,
) -> Result<f64> {
    d.check(p)?;
    let tr = tr.into();
    let (q, law) = canonicalize(p, d.parity)?;
    let ground = strings_for(&q, d.sub, law, StateKind::Ground);
    let excited = strings_for(&q, d.sub, law, StateKind::FirstExcited);
    Ok(string_energy_total(&q, &excited, tr)?.1 - string_energy_total(&q, &ground, tr)?.1)
}

/// Surface energy with the excitation energy filled in.
pub fn energy_breakdown(
    d: &RegimeDispatch,
    p: &ModelParams,
    tr: impl Into<Truncation>,
) -> Result<EnergyBreakdown> {
    let tr = tr.into();
    let mut out = surface_energy(d, p, tr)?;
    out.excitation = Some(excitation_energy(d, p, tr)?);
    Ok(out)
}
