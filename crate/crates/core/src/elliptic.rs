//! Theta functions with rational characteristics and the sigma/zeta family
//! derived from them.
//!
//! All series are summed symmetrically around the dominant term, so large
//! imaginary arguments cost a few extra terms instead of precision.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Truncation tolerance used by the convenience wrappers.
pub const DEFAULT_EPS: f64 = 1e-17;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Modulus of the period lattice `{1, τ}`; construction enforces `Im τ > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "C64", into = "C64")]
pub struct LatticeTau(C64);

impl LatticeTau {
    pub fn new(tau: C64) -> Result<Self> {
        if tau.im <= 0.0 || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(Error::Domain(format!(
                "Im(tau) must be positive, got {tau}"
            )));
        }
        Ok(Self(tau))
    }

    /// `τ = i·t`.
    pub fn imaginary(t: f64) -> Result<Self> {
        Self::new(C64::new(0.0, t))
    }

    pub fn value(&self) -> C64 {
        self.0
    }

    /// `Im τ`, the quantity that controls every convergence rate.
    pub fn height(&self) -> f64 {
        self.0.im
    }

    /// Modulus of the doubled lattice `{1, 2τ}` used by the R-matrix.
    pub fn doubled(&self) -> Self {
        Self(self.0 * 2.0)
    }
}

impl TryFrom<C64> for LatticeTau {
    type Error = Error;
    fn try_from(tau: C64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<LatticeTau> for C64 {
    fn from(t: LatticeTau) -> C64 {
        t.0
    }
}

/// Characteristic `[a, b]` of a theta function, stored as small rationals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ThetaChar {
    a: (i32, u32),
    b: (i32, u32),
}

impl ThetaChar {
    /// `θ[1/2, 1/2]`, the odd function that defines σ.
    pub const ODD: Self = Self {
        a: (1, 2),
        b: (1, 2),
    };
    /// `θ[0, 1/2]`.
    pub const EVEN_SHIFTED: Self = Self {
        a: (0, 1),
        b: (1, 2),
    };
    /// `θ[0, 0]`.
    pub const EVEN: Self = Self {
        a: (0, 1),
        b: (0, 1),
    };
    /// `θ[1/2, 0]`.
    pub const ODD_UNSHIFTED: Self = Self {
        a: (1, 2),
        b: (0, 1),
    };

    /// Characteristic `[a_num/a_den, b_num/b_den]`.
    pub fn new(a_num: i32, a_den: u32, b_num: i32, b_den: u32) -> Result<Self> {
        if a_den == 0 || b_den == 0 {
            return Err(Error::Domain("characteristic denominator is zero".into()));
        }
        Ok(Self {
            a: (a_num, a_den),
            b: (b_num, b_den),
        })
    }

    pub fn a(&self) -> f64 {
        self.a.0 as f64 / self.a.1 as f64
    }

    pub fn b(&self) -> f64 {
        self.b.0 as f64 / self.b.1 as f64
    }
}

/// Half-width of the truncation window, centred on the dominant term.
fn window(u: C64, tau: LatticeTau, a: f64, eps: f64) -> (i64, i64) {
    let t = tau.height();
    let peak = -u.im / t - a;
    let width = (-eps.ln() / (PI * t)).sqrt();
    let m = (peak.abs() + width + a.abs()).ceil() as i64 + 1;
    (-m, m)
}

fn series(ch: ThetaChar, u: C64, tau: LatticeTau, eps: f64) -> (C64, C64) {
    let (a, b) = (ch.a(), ch.b());
    let (lo, hi) = window(u, tau, a, eps);
    let tv = tau.value();
    let ub = u + b;
    let mut value = C64::new(0.0, 0.0);
    let mut deriv = C64::new(0.0, 0.0);
    for m in lo..=hi {
        let n = m as f64 + a;
        let term = (I * PI * (n * n) * tv + 2.0 * I * PI * n * ub).exp();
        value += term;
        deriv += 2.0 * I * PI * n * term;
    }
    (value, deriv)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1e-6 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "truncation tolerance {eps} outside (0, 1e-6]"
        )))
    }
}

/// `θ[a,b](u, τ) = Σ_m exp(iπ(m+a)²τ + 2iπ(m+a)(u+b))`, truncated once the
/// omitted Gaussian tail falls below `eps` relative to the largest term.
pub fn theta(ch: ThetaChar, u: C64, tau: LatticeTau, eps: f64) -> Result<C64> {
    check_eps(eps)?;
    Ok(series(ch, u, tau, eps).0)
}

/// Theta function together with its derivative in `u`.
pub fn theta_with_derivative(
    ch: ThetaChar,
    u: C64,
    tau: LatticeTau,
    eps: f64,
) -> Result<(C64, C64)> {
    check_eps(eps)?;
    Ok(series(ch, u, tau, eps))
}

/// Theta function at the default tolerance.
pub fn theta_fast(ch: ThetaChar, u: C64, tau: LatticeTau) -> C64 {
    series(ch, u, tau, DEFAULT_EPS).0
}

/// `σ(u) = θ[1/2,1/2](u, τ)`.
pub fn sigma(u: C64, tau: LatticeTau) -> C64 {
    series(ThetaChar::ODD, u, tau, DEFAULT_EPS).0
}

/// Term-wise derivative of σ.
pub fn sigma_prime(u: C64, tau: LatticeTau) -> C64 {
    series(ThetaChar::ODD, u, tau, DEFAULT_EPS).1
}

/// `(σ(u), σ'(u))` from a single pass over the series.
pub fn sigma_and_prime(u: C64, tau: LatticeTau) -> (C64, C64) {
    series(ThetaChar::ODD, u, tau, DEFAULT_EPS)
}

/// Distance from `u` to the nearest point of the lattice `ℤ + τℤ`.
pub fn lattice_distance(u: C64, tau: LatticeTau) -> f64 {
    let t = tau.value();
    let n = (u.im / t.im).round();
    let r = u - n * t;
    let m = r.re.round();
    (r - m).norm()
}

/// `ζ(u) = σ'(u)/σ(u)`; a pole error on the period lattice.
pub fn zeta(u: C64, tau: LatticeTau) -> Result<C64> {
    if lattice_distance(u, tau) < 1e-13 {
        return Err(Error::Pole(format!("zeta at lattice point {u}")));
    }
    let (s, ds) = sigma_and_prime(u, tau);
    Ok(ds / s)
}

/// Normalized residuals of the standard theta-function identities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// Three-term Riemann identity for σ.
    pub riemann: f64,
    /// Duplication formula for σ(2u).
    pub double_angle: f64,
    /// `σ(u+1) = −σ(u)`.
    pub shift_one: f64,
    /// `σ(u+τ) = −e^{−2iπ(u+τ/2)} σ(u)`.
    pub shift_tau: f64,
    /// σ as a product of theta functions on the doubled lattice.
    pub doubled_product: f64,
    /// `θ[1/2,1/2](2u, 2τ)` as a product of σ values.
    pub doubled_odd: f64,
    /// `θ[0,1/2](2u, 2τ)` as a product of σ values.
    pub doubled_even: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.riemann,
            self.double_angle,
            self.shift_one,
            self.shift_tau,
            self.doubled_product,
            self.doubled_odd,
            self.doubled_even,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(lhs: C64, rhs: C64) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0)
}

/// Residuals of the theta-function identities at the given arguments.
pub fn identity_residuals(u: C64, v: C64, x: C64, y: C64, tau: LatticeTau) -> IdentityResiduals {
    let s = |z: C64| sigma(z, tau);
    let t = tau.value();
    let half = C64::new(0.5, 0.0);

    let riemann = rel(
        s(u + x) * s(u - x) * s(v + y) * s(v - y) - s(u + y) * s(u - y) * s(v + x) * s(v - x),
        s(u + v) * s(u - v) * s(x + y) * s(x - y),
    );

    let q = -(half + t / 2.0);
    let double_angle = rel(
        s(2.0 * u),
        2.0 * s(u) * s(u + half) * s(u + t / 2.0) * s(u + q) / (s(half) * s(t / 2.0) * s(q)),
    );

    let shift_one = rel(s(u + 1.0), -s(u));
    let shift_tau = rel(s(u + t), -(-2.0 * I * PI * (u + t / 2.0)).exp() * s(u));

    let t2 = tau.doubled();
    let th0 = |z: C64| theta_fast(ThetaChar::EVEN_SHIFTED, z, t2);
    let th1 = |z: C64| theta_fast(ThetaChar::ODD, z, t2);
    let doubled_product = rel(
        s(u) / s(t / 2.0),
        th0(u) * th1(u) / (th0(t / 2.0) * th1(t / 2.0)),
    );
    let doubled_odd = rel(
        th1(2.0 * u),
        th1(t) * s(u) * s(u + half) / (s(t / 2.0) * s(t / 2.0 + half)),
    );
    let doubled_even = rel(
        th0(2.0 * u),
        th0(C64::new(0.0, 0.0)) * s(u - t / 2.0) * s(u + half + t / 2.0)
            / (s(-t / 2.0) * s(t / 2.0 + half)),
    );

    IdentityResiduals {
        riemann,
        double_angle,
        shift_one,
        shift_tau,
        doubled_product,
        doubled_odd,
        doubled_even,
    }
}
