//! The trigonometric limit `τ → i∞`: the open XXZ chain with
//! `J_x = J_y = 1`, `J_z = cosh(iπη)`.
//!
//! Real `η` gives `|J_z| < 1` with energies as integrals over the real
//! line; imaginary `η` gives `|J_z| > 1` with energies as exponentially
//! convergent series.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::elliptic::C64;
use crate::error::{Error, Result};
use crate::lattice::{CouplingSet, EtaKind, FieldAxes, Side, TransformEffect};
use crate::thermo::{
    band_weight, cosh_sech_series, geometric, EnergyBreakdown, Parity, Remainder, StringEnergy,
    Truncation,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const REGION_TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Parameters of the limiting chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XXZParams {
    pub eta: C64,
    pub beta_minus: [C64; 3],
    pub beta_plus: [C64; 3],
    pub parity: Parity,
}

impl XXZParams {
    pub fn new(
        eta: C64,
        beta_minus: [C64; 3],
        beta_plus: [C64; 3],
        parity: Parity,
    ) -> Result<Self> {
        let p = Self {
            eta,
            beta_minus,
            beta_plus,
            parity,
        };
        p.eta_kind()?;
        Ok(p)
    }

    pub fn eta_kind(&self) -> Result<EtaKind> {
        let e = self.eta;
        if e.im == 0.0 && e.re > 0.0 && e.re < 1.0 {
            Ok(EtaKind::Real)
        } else if e.re == 0.0 && e.im > 0.0 {
            Ok(EtaKind::PureImaginary)
        } else {
            Err(Error::Domain(format!(
                "eta must lie in (0,1) or on the positive imaginary axis, got {e}"
            )))
        }
    }

    pub fn beta(&self, side: Side) -> [C64; 3] {
        match side {
            Side::Minus => self.beta_minus,
            Side::Plus => self.beta_plus,
        }
    }

    fn beta_mut(&mut self, side: Side) -> &mut [C64; 3] {
        match side {
            Side::Minus => &mut self.beta_minus,
            Side::Plus => &mut self.beta_plus,
        }
    }
}

/// Couplings and boundary fields of the limiting Hamiltonian.
///
/// The field signs are those of the `τ → i∞` limit of the elliptic fields:
/// `h⁻ = +sinh(iπη)·(…)`, `h⁺ = −sinh(iπη)·(…)`.
pub fn xxz_couplings_and_fields(p: &XXZParams) -> Result<CouplingSet> {
    p.eta_kind()?;
    let sh = (I * PI * p.eta).sinh();
    let field = |side: Side, sign: f64| -> Result<[C64; 3]> {
        let b = p.beta(side);
        let (s1, c1) = ((I * PI * b[0]).sinh(), (I * PI * b[0]).cosh());
        let (s2, c2) = ((I * PI * b[1]).sinh(), (I * PI * b[1]).cosh());
        let (s3, c3) = ((I * PI * b[2]).sinh(), (I * PI * b[2]).cosh());
        if s1.norm() < REGION_TOL || c3.norm() < REGION_TOL {
            return Err(Error::Pole(format!(
                "boundary field diverges for beta = {b:?}"
            )));
        }
        Ok([
            sign * I * sh * s2 / (s1 * c3),
            sign * sh * c2 / (s1 * c3),
            sign * sh * c1 / s1 * s3 / c3,
        ])
    };
    Ok(CouplingSet {
        jx: c(1.0, 0.0),
        jy: c(1.0, 0.0),
        jz: (I * PI * p.eta).cosh(),
        h_minus: field(Side::Minus, -1.0)?,
        h_plus: field(Side::Plus, 1.0)?,
    })
}

// ---------------------------------------------------------------------------
// Real η: integrals

/// `∫_{−∞}^{∞} f` for an even `f` decaying at least like `e^{−rate·|x|}`.
fn even_integral(f: impl Fn(f64) -> f64, rate: f64, eps: f64) -> Result<f64> {
    if rate.is_nan() || rate <= 0.0 {
        return Err(Error::Divergence(format!(
            "integrand does not decay (rate {rate})"
        )));
    }
    // Cut where the envelope drops below 1e-18.
    let end = 18.0 * std::f64::consts::LN_10 / rate;
    let panels = (end / 2.0).ceil().max(1.0) as usize;
    let width = end / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
        let out = quadrature::integrate(&f, a, b, eps * width);
        if !out.integral.is_finite() {
            return Err(Error::Numeric(format!("quadrature failed on [{a}, {b}]")));
        }
        total += out.integral;
    }
    Ok(2.0 * total)
}

/// `cosh(s·x)/sinh(x)` for `x > 0`, stable for large `x`.
fn cosh_over_sinh(s: C64, x: f64) -> C64 {
    (((s - 1.0) * x).exp() + ((-s - 1.0) * x).exp()) / (1.0 - (-2.0 * x).exp())
}

/// `tanh(ηx)/sinh(x) · Σ_j w_j cosh(s_j x)`, with its limit at the origin.
fn tanh_cosh_integrand(eta: f64, terms: &[(f64, C64)]) -> impl Fn(f64) -> f64 + '_ {
    move |x: f64| {
        if x < 1e-8 {
            return eta * terms.iter().map(|&(w, _)| w).sum::<f64>();
        }
        let t = (eta * x).tanh();
        terms
            .iter()
            .map(|&(w, s)| w * t * cosh_over_sinh(s, x).re)
            .sum()
    }
}

fn decay_rate(terms: &[(f64, C64)]) -> f64 {
    1.0 - terms.iter().map(|&(_, s)| s.re.abs()).fold(0.0, f64::max)
}

fn tanh_cosh_integral(eta: f64, terms: &[(f64, C64)], eps: f64) -> Result<f64> {
    even_integral(tanh_cosh_integrand(eta, terms), decay_rate(terms), eps)
}

/// Energy of a discrete root `w` for real `η`; zero outside the band.
fn real_root_energy(eta: f64, w: C64, eps: f64) -> Result<f64> {
    let weight = band_weight(EtaKind::Real, c(eta, 0.0), w);
    if weight == 0 {
        return Ok(0.0);
    }
    // cosh(2iwx) with w = i·y is cosh(−2y·x).
    let s = 2.0 * I * w;
    let f = |x: f64| ((s * x).cosh() / (eta * x).cosh()).re;
    let integral = even_integral(f, eta - s.re.abs(), eps)?;
    Ok(weight as f64 * (PI * eta).sin() / PI * integral)
}

/// Boundary parameters with `β₁` folded into `(0, 1)`.
fn reduce_real(p: &XXZParams) -> Result<XXZParams> {
    let mut q = p.clone();
    for side in [Side::Minus, Side::Plus] {
        let b = q.beta_mut(side);
        b[0] = c(b[0].re - b[0].re.floor(), b[0].im);
        if b[0].re < REGION_TOL || b[0].im.abs() > REGION_TOL {
            return Err(Error::Domain(format!(
                "beta_1 = {} is not a real non-integer",
                b[0]
            )));
        }
    }
    Ok(q)
}

pub fn xxz_energies_real(p: &XXZParams, eps: f64) -> Result<EnergyBreakdown> {
    if p.eta_kind()? != EtaKind::Real {
        return Err(Error::Domain("real-eta energies need a real eta".into()));
    }
    let q = reduce_real(p)?;
    let eta = q.eta.re;
    let sn = (PI * eta).sin();
    let cs = (PI * eta).cos();
    let e_bulk =
        -2.0 * sn / PI * tanh_cosh_integral(eta, &[(1.0, c(1.0 - 2.0 * eta, 0.0))], eps)? - cs;
    let free_terms = [
        (1.0, c(1.0 - 2.0 * eta, 0.0)),
        (1.0, c(1.0 - (1.0 - 2.0 * eta).abs(), 0.0)),
        (-1.0, c(1.0 - eta, 0.0)),
        (-1.0, c(eta, 0.0)),
    ];
    let e_free = -sn / PI * tanh_cosh_integral(eta, &free_terms, eps)? + cs
        - 2.0 * sn / (2.0 * PI * eta).tan();
    let field = |side: Side| -> Result<f64> {
        let b = q.beta(side);
        let terms = [(1.0, 1.0 - 2.0 * b[0]), (1.0, 2.0 * b[2])];
        Ok(-sn / PI * tanh_cosh_integral(eta, &terms, eps)?)
    };
    let e_left = field(Side::Minus)?;
    let e_right = field(Side::Plus)?;
    let mut e_strings = Vec::new();
    if eta > 0.5 {
        let w = c(0.0, (1.0 - eta) / 2.0);
        e_strings.push(StringEnergy {
            position: w,
            energy: real_root_energy(eta, w, eps)?,
        });
    }
    let total_density_part =
        e_free + e_left + e_right + e_strings.iter().map(|s| s.energy).sum::<f64>();
    Ok(EnergyBreakdown {
        e_bulk,
        e_free,
        e_left,
        e_right,
        e_strings,
        parity_term: 0.0,
        total_density_part,
        surface: total_density_part,
        excitation: Some(0.0),
    })
}

// ---------------------------------------------------------------------------
// Imaginary η: series

/// `Σ_{k≥1} tanh(k·a) Σ_j w_j ρ_j^k` for `a > 0` and `|ρ_j| ≤ 1`.
fn tanh_power_series(a: f64, terms: &[(C64, C64)], tr: Truncation) -> Result<C64> {
    let mut head = c(0.0, 0.0);
    for &(w, rho) in terms {
        head += w * geometric(rho)?;
    }
    // tanh(ka) = 1 − 2q^k/(1 + q^k).
    let q = (-2.0 * a).exp();
    let mut qk = 1.0;
    let mut powers = vec![c(1.0, 0.0); terms.len()];
    let mut rem = Remainder::new();
    for _ in 0..tr.kmax {
        qk *= q;
        let mut inner = c(0.0, 0.0);
        for (pw, &(w, rho)) in powers.iter_mut().zip(terms) {
            *pw *= rho;
            inner += w * *pw;
        }
        if rem.push(-2.0 * qk / (1.0 + qk) * inner, head.norm(), tr.eps) {
            return Ok(head + rem.sum);
        }
    }
    Err(Error::Divergence(format!(
        "no convergence within {} terms",
        tr.kmax
    )))
}

fn min_im(a: C64, b: C64) -> C64 {
    if b.im < a.im {
        b
    } else {
        a
    }
}

fn max_im(a: C64, b: C64) -> C64 {
    if b.im > a.im {
        b
    } else {
        a
    }
}

/// Boundary strings `(w⁻, w⁺)` of the ground and first excited states.
pub fn xxz_strings(p: &XXZParams, parity: Parity) -> ([C64; 2], [C64; 2]) {
    let eta = p.eta;
    let (m3, p3) = (p.beta_minus[2], p.beta_plus[2]);
    let zero = c(0.0, 0.0);
    let half = c(0.5, 0.0);
    match parity {
        Parity::Even => {
            let phi = min_im(eta / 2.0 + m3, eta);
            (
                [half + phi, half - min_im(eta / 2.0 + p3, 2.0 * eta - phi)],
                [
                    half + max_im(eta / 2.0 - m3, zero),
                    half - max_im(eta / 2.0 - p3, zero),
                ],
            )
        }
        Parity::Odd => (
            [
                half + max_im(eta / 2.0 - m3, zero),
                half - min_im(eta / 2.0 + p3, 1.5 * eta + m3),
            ],
            [half + eta / 2.0 + m3, half - max_im(eta / 2.0 - p3, zero)],
        ),
    }
}

/// Folds `β₁` into `Re β₁ = 0`, `Im β₁ > 0`; negating `β₁` swaps the parity.
fn reduce_imag(p: &XXZParams) -> Result<(XXZParams, Parity)> {
    let mut q = p.clone();
    let mut law = p.parity;
    for side in [Side::Minus, Side::Plus] {
        let b = q.beta_mut(side);
        b[0] = c(b[0].re - b[0].re.round(), b[0].im);
        if b[0].im < -REGION_TOL {
            b[0] = -b[0];
            law = law.flipped();
        }
        if b[0].re.abs() > REGION_TOL || b[0].im < REGION_TOL {
            return Err(Error::Domain(format!(
                "beta_1 = {} is not pure imaginary and nonzero",
                b[0]
            )));
        }
        if b[2].re.abs() > REGION_TOL || b[2].im < -REGION_TOL {
            return Err(Error::Domain(format!(
                "beta_3 = {} must be imaginary with Im >= 0",
                b[2]
            )));
        }
    }
    Ok((q, law))
}

/// Energy of a discrete root `w` for imaginary `η`; zero outside the band.
fn imag_root_energy(eta: C64, w: C64, tr: Truncation) -> Result<f64> {
    let weight = band_weight(EtaKind::PureImaginary, eta, w);
    if weight == 0 {
        return Ok(0.0);
    }
    let sh = (I * PI * eta).sinh();
    let sum = cosh_sech_series(2.0 * I * PI * w, I * PI * eta, tr)?;
    Ok((-(weight as f64) * sh * sum).re)
}

pub fn xxz_energies_imag(p: &XXZParams, tr: impl Into<Truncation>) -> Result<EnergyBreakdown> {
    if p.eta_kind()? != EtaKind::PureImaginary {
        return Err(Error::Domain(
            "imaginary-eta energies need a pure imaginary eta".into(),
        ));
    }
    let tr = tr.into();
    let (q, law) = reduce_imag(p)?;
    let eta = q.eta;
    let a = eta.im;
    let sh = (I * PI * eta).sinh();
    let ch = (I * PI * eta).cosh();
    let r1 = (-2.0 * PI * a).exp();
    // tanh(ikπη) = −tanh(kπa).
    let bulk = tanh_power_series(PI * a, &[(c(1.0, 0.0), c(r1, 0.0))], tr)?;
    let e_bulk = (4.0 * sh * bulk - ch).re;
    let free = tanh_power_series(
        2.0 * PI * a,
        &[(c(-1.0, 0.0), c(r1 * r1, 0.0)), (c(1.0, 0.0), c(r1, 0.0))],
        tr,
    )?;
    let e_free = (-4.0 * sh * free + ch - 2.0 * sh / (2.0 * I * PI * eta).tanh()).re;
    let field = |side: Side| -> Result<f64> {
        let b = q.beta(side);
        let terms = [
            (c(1.0, 0.0), (2.0 * I * PI * b[0]).exp()),
            (c(1.0, 0.0), -(2.0 * I * PI * b[2]).exp()),
        ];
        Ok((2.0 * sh * tanh_power_series(PI * a, &terms, tr)?).re)
    };
    let e_left = field(Side::Minus)?;
    let e_right = field(Side::Plus)?;
    let (ground, excited) = xxz_strings(&q, law);
    let mut e_strings = Vec::with_capacity(2);
    for w in ground {
        e_strings.push(StringEnergy {
            position: w,
            energy: imag_root_energy(eta, w, tr)?,
        });
    }
    let parity_term = match p.parity {
        Parity::Even => 0.0,
        Parity::Odd => imag_root_energy(eta, c(0.5, 0.0), tr)?,
    };
    let ground_total: f64 = e_strings.iter().map(|s| s.energy).sum();
    let mut excited_total = 0.0;
    for w in excited {
        excited_total += imag_root_energy(eta, w, tr)?;
    }
    let total_density_part = e_free + e_left + e_right + ground_total;
    Ok(EnergyBreakdown {
        e_bulk,
        e_free,
        e_left,
        e_right,
        e_strings,
        parity_term,
        total_density_part,
        surface: total_density_part - parity_term,
        excitation: Some(excited_total - ground_total),
    })
}

/// Energies on whichever branch `η` selects.
pub fn xxz_energies(p: &XXZParams, tr: impl Into<Truncation>) -> Result<EnergyBreakdown> {
    let tr = tr.into();
    match p.eta_kind()? {
        EtaKind::Real => xxz_energies_real(p, tr.eps.max(1e-15)),
        EtaKind::PureImaginary => xxz_energies_imag(p, tr),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XXZTransform {
    /// `β⁺₁ → β⁺₁ + 1`.
    B1PlusOne,
    /// `β⁺₁ → −β⁺₁`.
    B1Negate,
}

/// Applies a transform to the imaginary-η chain and reports its effect on
/// the thermodynamic energies.
pub fn transform_rules_xxz(
    p: &XXZParams,
    kind: XXZTransform,
) -> Result<(XXZParams, TransformEffect)> {
    if p.eta_kind()? != EtaKind::PureImaginary {
        return Err(Error::Domain(
            "transform rules are stated for imaginary eta".into(),
        ));
    }
    let mut q = p.clone();
    let effect = match kind {
        XXZTransform::B1PlusOne => {
            q.beta_plus[0] += 1.0;
            TransformEffect::FieldFlip(FieldAxes::XY)
        }
        XXZTransform::B1Negate => {
            q.beta_plus[0] = -q.beta_plus[0];
            TransformEffect::ParitySwapEquivalent(FieldAxes {
                x: true,
                y: true,
                z: true,
            })
        }
    };
    Ok((q, effect))
}
