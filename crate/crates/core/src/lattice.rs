//! Couplings, R- and K-matrices, the double-row transfer matrix and the
//! open-chain Hamiltonian.
//!
//! Basis states are little-endian bit strings: site 1 is the least
//! significant bit, and bit value 0 is the `σᶻ = +1` state.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::elliptic::{
    lattice_distance, sigma, sigma_prime, theta_fast, zeta, LatticeTau, ThetaChar, C64,
};
use crate::error::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest chain for which dense `2^N × 2^N` operators are built.
pub const DENSE_SITE_CAP: usize = 12;
/// Largest chain for matrix-free operators.
pub const SITE_CAP: usize = 20;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EtaKind {
    Real,
    PureImaginary,
}

/// Which end of the chain a boundary quantity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Site 1, driven by `β⁻`.
    Minus,
    /// Site N, driven by `β⁺`.
    Plus,
}

/// Physical parameters of an open chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tau: LatticeTau,
    pub eta: C64,
    pub eta_kind: EtaKind,
    pub n_sites: usize,
    pub beta_minus: [C64; 3],
    pub beta_plus: [C64; 3],
    /// One θ per site; all zero for the homogeneous chain.
    pub inhomogeneities: Vec<C64>,
}

impl ModelParams {
    /// Validates `η` and infers its kind; inhomogeneities start at zero.
    pub fn new(
        tau: LatticeTau,
        eta: C64,
        n_sites: usize,
        beta_minus: [C64; 3],
        beta_plus: [C64; 3],
    ) -> Result<Self> {
        if n_sites == 0 || n_sites > SITE_CAP {
            return Err(Error::Domain(format!(
                "chain length {n_sites} outside 1..={SITE_CAP}"
            )));
        }
        let eta_kind = if eta.im == 0.0 {
            if !(eta.re > 0.0 && eta.re < 1.0) {
                return Err(Error::Domain(format!(
                    "real eta must lie in (0,1), got {}",
                    eta.re
                )));
            }
            EtaKind::Real
        } else if eta.re == 0.0 {
            if !(eta.im > 0.0 && eta.im < tau.height()) {
                return Err(Error::Domain(format!(
                    "imaginary eta must satisfy 0 < Im(eta) < Im(tau), got {eta}"
                )));
            }
            EtaKind::PureImaginary
        } else {
            return Err(Error::Domain(format!(
                "eta must be real or pure imaginary, got {eta}"
            )));
        };
        Ok(Self {
            tau,
            eta,
            eta_kind,
            n_sites,
            beta_minus,
            beta_plus,
            inhomogeneities: vec![c(0.0, 0.0); n_sites],
        })
    }

    pub fn with_inhomogeneities(mut self, theta: Vec<C64>) -> Result<Self> {
        if theta.len() != self.n_sites {
            return Err(Error::Domain(format!(
                "{} inhomogeneities for {} sites",
                theta.len(),
                self.n_sites
            )));
        }
        self.inhomogeneities = theta;
        Ok(self)
    }

    /// Same boundary data on a chain of a different length.
    pub fn with_sites(&self, n_sites: usize) -> Result<Self> {
        Self::new(self.tau, self.eta, n_sites, self.beta_minus, self.beta_plus)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.inhomogeneities.iter().all(|t| t.norm() == 0.0)
    }

    pub fn beta(&self, side: Side) -> [C64; 3] {
        match side {
            Side::Minus => self.beta_minus,
            Side::Plus => self.beta_plus,
        }
    }

    pub fn beta_mut(&mut self, side: Side) -> &mut [C64; 3] {
        match side {
            Side::Minus => &mut self.beta_minus,
            Side::Plus => &mut self.beta_plus,
        }
    }

    /// Shifted boundary parameters `(β₁, β₂ + τ/2, β₃ + 1/2)`.
    pub fn alpha(&self, side: Side) -> [C64; 3] {
        let b = self.beta(side);
        let t = self.tau.value();
        [b[0], b[1] + t / 2.0, b[2] + 0.5]
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }
}

/// Bulk couplings and the two boundary fields, each field ordered `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    pub jx: C64,
    pub jy: C64,
    pub jz: C64,
    pub h_minus: [C64; 3],
    pub h_plus: [C64; 3],
}

impl CouplingSet {
    pub fn field(&self, side: Side) -> [C64; 3] {
        match side {
            Side::Minus => self.h_minus,
            Side::Plus => self.h_plus,
        }
    }

    /// Largest imaginary part among the nine constants.
    pub fn max_imag(&self) -> f64 {
        [self.jx, self.jy, self.jz]
            .iter()
            .chain(self.h_minus.iter())
            .chain(self.h_plus.iter())
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }
}

/// The constants `(c_x, c_y, c_z)` that weight the Pauli parts of a K-matrix.
pub fn boundary_constants(p: &ModelParams, side: Side) -> Result<[C64; 3]> {
    let tau = p.tau;
    let t = tau.value();
    let alpha = p.alpha(side);
    for (l, a) in alpha.iter().enumerate() {
        if lattice_distance(*a, tau) < 1e-12 {
            return Err(Error::Pole(format!(
                "boundary parameter {} sits on a zero of sigma",
                l + 1
            )));
        }
    }
    let sum: C64 = alpha.iter().sum();
    let shift_x = t / 2.0;
    let shift_y = (1.0 + t) / 2.0;
    let ratio = |shift: C64| {
        alpha
            .iter()
            .map(|&a| sigma(a - shift, tau) / sigma(a, tau))
            .product::<C64>()
    };
    let cx = (-I * PI * (sum - shift_x)).exp() * ratio(shift_x);
    let cy = (-I * PI * (sum - shift_y)).exp() * ratio(shift_y);
    let cz = ratio(c(0.5, 0.0));
    Ok([cx, cy, cz])
}

/// Bulk couplings `J_{x,y,z}` and both boundary fields.
pub fn couplings(p: &ModelParams) -> Result<CouplingSet> {
    let tau = p.tau;
    let t = tau.value();
    let eta = p.eta;
    let phase = (I * PI * eta).exp();
    let qx = t / 2.0;
    let qy = (1.0 + t) / 2.0;
    let qz = c(0.5, 0.0);
    let jx = phase * sigma(eta + qx, tau) / sigma(qx, tau);
    let jy = phase * sigma(eta + qy, tau) / sigma(qy, tau);
    let jz = sigma(eta + qz, tau) / sigma(qz, tau);
    let s = sigma(eta, tau);
    let scale = [s / sigma(qx, tau), s / sigma(qy, tau), s / sigma(qz, tau)];
    let cm = boundary_constants(p, Side::Minus)?;
    let cp = boundary_constants(p, Side::Plus)?;
    Ok(CouplingSet {
        jx,
        jy,
        jz,
        h_minus: [scale[0] * cm[0], scale[1] * cm[1], scale[2] * cm[2]],
        h_plus: [-scale[0] * cp[0], -scale[1] * cp[1], -scale[2] * cp[2]],
    })
}

/// The four eight-vertex weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexWeights {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl VertexWeights {
    pub fn new(u: C64, p: &ModelParams) -> Self {
        let t2 = p.tau.doubled();
        let th0 = |z: C64| theta_fast(ThetaChar::EVEN_SHIFTED, z, t2);
        let th1 = |z: C64| theta_fast(ThetaChar::ODD, z, t2);
        let eta = p.eta;
        let d0 = th0(c(0.0, 0.0));
        let (t0u, t1u, t0e, t1e) = (th0(u), th1(u), th0(u + eta), th1(u + eta));
        let (n1, n0) = (d0 * th1(eta), d0 * th0(eta));
        Self {
            a: t0u * t1e / n1,
            b: t1u * t0e / n1,
            c: t0u * t0e / n0,
            d: t1u * t1e / n0,
        }
    }

    pub fn matrix(&self) -> Matrix4<C64> {
        let z = c(0.0, 0.0);
        let (a, b, cc, d) = (self.a, self.b, self.c, self.d);
        Matrix4::new(a, z, z, d, z, b, cc, z, z, cc, b, z, d, z, z, a)
    }
}

/// Eight-vertex R-matrix on `V ⊗ V`, basis index `2·first + second`.
pub fn r_matrix(u: C64, p: &ModelParams) -> Matrix4<C64> {
    VertexWeights::new(u, p).matrix()
}

fn pauli() -> [Matrix2<C64>; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    [
        Matrix2::new(z, one, one, z),
        Matrix2::new(z, -I, I, z),
        Matrix2::new(one, z, z, -one),
    ]
}

/// K-matrix with constants `cs`, scaled by `σ(2u)/2σ(u)` written through the
/// duplication formula so that every entry is entire in `u`.
pub fn k_matrix(u: C64, cs: [C64; 3], tau: LatticeTau) -> Matrix2<C64> {
    let t = tau.value();
    let half = c(0.5, 0.0);
    let q = -(half + t / 2.0);
    let denom = sigma(half, tau) * sigma(t / 2.0, tau) * sigma(q, tau);
    let (s_half, s_tau, s_q) = (
        sigma(u + half, tau),
        sigma(u + t / 2.0, tau),
        sigma(u + q, tau),
    );
    let su = sigma(u, tau);
    let ident = s_half * s_tau * s_q / denom;
    let wx = cs[0] * su * (-I * PI * u).exp() * s_half * s_q / denom;
    let wy = -cs[1] * su * (I * PI * u).exp() * s_half * s_tau / denom;
    let wz = cs[2] * su * s_tau * s_q / denom;
    let [sx, sy, sz] = pauli();
    Matrix2::identity() * ident + sx * wx + sy * wy + sz * wz
}

/// Right reflection matrix `K⁻(u)`.
pub fn k_minus(u: C64, p: &ModelParams) -> Result<Matrix2<C64>> {
    Ok(k_matrix(u, boundary_constants(p, Side::Minus)?, p.tau))
}

/// Left reflection matrix `K⁺(u) = K⁻(−u−η)` with the `β⁺` constants.
pub fn k_plus(u: C64, p: &ModelParams) -> Result<Matrix2<C64>> {
    Ok(k_matrix(
        -u - p.eta,
        boundary_constants(p, Side::Plus)?,
        p.tau,
    ))
}

/// Matrix-free action of the double-row transfer matrix at a fixed `u`.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    n: usize,
    k_plus: Matrix2<C64>,
    k_minus: Matrix2<C64>,
    /// Weights at `u − θ_j` for the forward monodromy.
    forward: Vec<VertexWeights>,
    /// Weights at `u + θ_j` for the reflected monodromy.
    backward: Vec<VertexWeights>,
}

impl TransferOperator {
    pub fn new(u: C64, p: &ModelParams) -> Result<Self> {
        let theta = &p.inhomogeneities;
        let same = p.is_homogeneous();
        let w0 = VertexWeights::new(u, p);
        let forward = theta
            .iter()
            .map(|&t| {
                if same {
                    w0
                } else {
                    VertexWeights::new(u - t, p)
                }
            })
            .collect();
        let backward = theta
            .iter()
            .map(|&t| {
                if same {
                    w0
                } else {
                    VertexWeights::new(u + t, p)
                }
            })
            .collect();
        Ok(Self {
            n: p.n_sites,
            k_plus: k_plus(u, p)?,
            k_minus: k_minus(u, p)?,
            forward,
            backward,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    fn gate(w: &VertexWeights, site: usize, buf: &mut [C64]) {
        // Combined index: bit 0 is the auxiliary space, bit `site` is site `site`.
        let mask = 1usize << site;
        for i in 0..buf.len() {
            if i & 1 != 0 || i & mask != 0 {
                continue;
            }
            let (i01, i10, i11) = (i | mask, i | 1, i | 1 | mask);
            let (v00, v01, v10, v11) = (buf[i], buf[i01], buf[i10], buf[i11]);
            buf[i] = w.a * v00 + w.d * v11;
            buf[i11] = w.d * v00 + w.a * v11;
            buf[i01] = w.b * v01 + w.c * v10;
            buf[i10] = w.c * v01 + w.b * v10;
        }
    }

    fn aux(k: &Matrix2<C64>, buf: &mut [C64]) {
        for pair in buf.chunks_exact_mut(2) {
            let (x0, x1) = (pair[0], pair[1]);
            pair[0] = k[(0, 0)] * x0 + k[(0, 1)] * x1;
            pair[1] = k[(1, 0)] * x0 + k[(1, 1)] * x1;
        }
    }

    /// `out = t(u)·psi`.
    pub fn apply(&self, psi: &[C64], out: &mut [C64]) {
        let dim = self.dim();
        assert_eq!(psi.len(), dim);
        assert_eq!(out.len(), dim);
        out.iter_mut().for_each(|z| *z = c(0.0, 0.0));
        let mut buf = vec![c(0.0, 0.0); 2 * dim];
        for a in 0..2 {
            buf.iter_mut().for_each(|z| *z = c(0.0, 0.0));
            for (s, &v) in psi.iter().enumerate() {
                buf[2 * s + a] = v;
            }
            for j in (0..self.n).rev() {
                Self::gate(&self.backward[j], j + 1, &mut buf);
            }
            Self::aux(&self.k_minus, &mut buf);
            for j in 0..self.n {
                Self::gate(&self.forward[j], j + 1, &mut buf);
            }
            Self::aux(&self.k_plus, &mut buf);
            for (s, o) in out.iter_mut().enumerate() {
                *o += buf[2 * s + a];
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = vec![c(0.0, 0.0); dim];
        let mut col = vec![c(0.0, 0.0); dim];
        for j in 0..dim {
            e[j] = c(1.0, 0.0);
            self.apply(&e, &mut col);
            e[j] = c(0.0, 0.0);
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Dense transfer matrix `t(u)`.
pub fn transfer_matrix(u: C64, p: &ModelParams) -> Result<DMatrix<C64>> {
    if p.n_sites > DENSE_SITE_CAP {
        return Err(Error::Unsupported(format!(
            "dense operators capped at {DENSE_SITE_CAP} sites"
        )));
    }
    Ok(TransferOperator::new(u, p)?.to_dense())
}

/// Matrix-free open-chain Hamiltonian.
#[derive(Clone, Debug)]
pub struct SpinHamiltonian {
    n: usize,
    c: CouplingSet,
}

impl SpinHamiltonian {
    pub fn new(p: &ModelParams) -> Result<Self> {
        Ok(Self {
            n: p.n_sites,
            c: couplings(p)?,
        })
    }

    pub fn couplings(&self) -> &CouplingSet {
        &self.c
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `out = H·x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        let n = self.n;
        let cs = &self.c;
        out.iter_mut().for_each(|z| *z = c(0.0, 0.0));
        let spin = |s: usize, j: usize| if (s >> j) & 1 == 0 { 1.0 } else { -1.0 };
        for (s, &v) in x.iter().enumerate() {
            if v == c(0.0, 0.0) {
                continue;
            }
            let mut diag = cs.h_minus[2] * spin(s, 0) + cs.h_plus[2] * spin(s, n - 1);
            for j in 0..n.saturating_sub(1) {
                let (zj, zk) = (spin(s, j), spin(s, j + 1));
                diag += cs.jz * (zj * zk);
                out[s ^ (3 << j)] += (cs.jx - cs.jy * (zj * zk)) * v;
            }
            out[s] += diag * v;
            // σʸ|b⟩ = i(−1)^b |1−b⟩.
            out[s ^ 1] += (cs.h_minus[0] + cs.h_minus[1] * I * spin(s, 0)) * v;
            out[s ^ (1 << (n - 1))] += (cs.h_plus[0] + cs.h_plus[1] * I * spin(s, n - 1)) * v;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = vec![c(0.0, 0.0); dim];
        let mut col = vec![c(0.0, 0.0); dim];
        for j in 0..dim {
            e[j] = c(1.0, 0.0);
            self.apply(&e, &mut col);
            e[j] = c(0.0, 0.0);
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Dense Hamiltonian from the two-site couplings and boundary fields.
pub fn hamiltonian(p: &ModelParams) -> Result<DMatrix<C64>> {
    if p.n_sites > DENSE_SITE_CAP {
        return Err(Error::Unsupported(format!(
            "dense operators capped at {DENSE_SITE_CAP} sites"
        )));
    }
    Ok(SpinHamiltonian::new(p)?.to_dense())
}

/// Hamiltonian recovered from the logarithmic derivative of `t(u)` at the origin.
pub fn hamiltonian_from_transfer(p: &ModelParams) -> Result<DMatrix<C64>> {
    if !p.is_homogeneous() {
        return Err(Error::Domain(
            "transfer route needs the homogeneous chain".into(),
        ));
    }
    if p.n_sites > DENSE_SITE_CAP {
        return Err(Error::Unsupported(format!(
            "dense operators capped at {DENSE_SITE_CAP} sites"
        )));
    }
    let t = |u: f64| transfer_matrix(c(u, 0.0), p);
    let stencil = |h: f64| -> Result<DMatrix<C64>> {
        Ok(
            (t(-2.0 * h)? - t(-h)? * c(8.0, 0.0) + t(h)? * c(8.0, 0.0) - t(2.0 * h)?)
                / c(12.0 * h, 0.0),
        )
    };
    let h = 1e-5;
    let coarse = stencil(h)?;
    let fine = stencil(h / 2.0)?;
    let dt = (fine * c(16.0, 0.0) - coarse) / c(15.0, 0.0);
    let t0 = t(0.0)?;
    let log_deriv = t0
        .lu()
        .solve(&dt)
        .ok_or_else(|| Error::Numeric("t(0) is singular".into()))?;
    let tau = p.tau;
    let eta = p.eta;
    let n = p.n_sites as f64;
    let shift = zeta(eta, tau)? * (n - 1.0) + zeta(2.0 * eta, tau)? * 2.0;
    let scale = sigma(eta, tau) / sigma_prime(c(0.0, 0.0), tau);
    let dim = p.dim();
    Ok((log_deriv - DMatrix::identity(dim, dim) * shift) * scale)
}

/// A single failed clause of the Hermiticity conditions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegionViolation {
    pub side: Side,
    /// Clause text, written for both sides as in `Re(β∓₃)=0 or 1`.
    pub clause: &'static str,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegionReport {
    pub in_region: bool,
    pub violated: Vec<RegionViolation>,
}

const REGION_TOL: f64 = 1e-12;

fn near(x: f64, target: f64) -> bool {
    (x - target).abs() <= REGION_TOL
}

/// Checks every interval clause of the Hermitian parameter region.
pub fn hermitian_region_check(p: &ModelParams) -> RegionReport {
    let period = p.tau.height();
    let open = |x: f64, lo: f64, hi: f64| x > lo + REGION_TOL && x < hi - REGION_TOL;
    let closed = |x: f64, lo: f64, hi: f64| x >= lo - REGION_TOL && x <= hi + REGION_TOL;
    let zero_or_one = |x: f64| near(x, 0.0) || near(x, 1.0);
    let zero_or_period = |x: f64| near(x, 0.0) || near(x, period);
    let mut violated = Vec::new();
    for side in [Side::Minus, Side::Plus] {
        let b = p.beta(side);
        let clauses: [(&'static str, bool); 6] = match p.eta_kind {
            EtaKind::Real => [
                ("Re(β∓₁)∈(0,2)", open(b[0].re, 0.0, 2.0)),
                ("Im(β∓₁)=0 or τ/i", zero_or_period(b[0].im)),
                ("Re(β∓₂)∈[0,2]", closed(b[1].re, 0.0, 2.0)),
                ("Im(β∓₂)=0 or τ/i", zero_or_period(b[1].im)),
                ("Re(β∓₃)=0 or 1", zero_or_one(b[2].re)),
                ("Im(β∓₃)∈[0,2τ/i]", closed(b[2].im, 0.0, 2.0 * period)),
            ],
            EtaKind::PureImaginary => [
                ("Re(β∓₁)=0 or 1", zero_or_one(b[0].re)),
                ("Im(β∓₁)∈(0,2τ/i)", open(b[0].im, 0.0, 2.0 * period)),
                ("Re(β∓₂)∈[0,2]", closed(b[1].re, 0.0, 2.0)),
                ("Im(β∓₂)=0 or τ/i", zero_or_period(b[1].im)),
                ("Re(β∓₃)=0 or 1", zero_or_one(b[2].re)),
                ("Im(β∓₃)∈[0,2τ/i]", closed(b[2].im, 0.0, 2.0 * period)),
            ],
        };
        for (clause, ok) in clauses {
            if !ok {
                violated.push(RegionViolation { side, clause });
            }
        }
    }
    RegionReport {
        in_region: violated.is_empty(),
        violated,
    }
}

/// Parameter maps that leave the zero roots, or the thermodynamics, unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    /// `β⁻ ⇄ β⁺`.
    SwapPM,
    /// `β^± → −β^±` on both sides.
    NegateBoth,
    /// `β⁺₁ → 1 − β⁺₁` (real η) or `β⁺₁ → τ − β⁺₁` (imaginary η).
    B1ReflectHalf,
    /// `β⁺₁ → β⁺₁ + 1`.
    B1PlusOne,
    /// `β⁺₁ → β⁺₁ + τ`.
    B1PlusTau,
}

/// Components of the `+` boundary field that change sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldAxes {
    pub x: bool,
    pub y: bool,
    pub z: bool,
}

impl FieldAxes {
    pub const X: Self = Self {
        x: true,
        y: false,
        z: false,
    };
    pub const Z: Self = Self {
        x: false,
        y: false,
        z: true,
    };
    pub const XY: Self = Self {
        x: true,
        y: true,
        z: false,
    };
    pub const YZ: Self = Self {
        x: false,
        y: true,
        z: true,
    };

    pub fn flips(&self) -> [bool; 3] {
        [self.x, self.y, self.z]
    }
}

/// Declared consequence of a parameter transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformEffect {
    SpectrumInvariant,
    /// The listed `h⁺` components flip; the thermodynamic energies do not change.
    FieldFlip(FieldAxes),
    /// The listed `h⁺` components flip, and the thermodynamic energies are
    /// those of the opposite chain-length parity.
    ParitySwapEquivalent(FieldAxes),
}

/// Applies a transform and reports its declared effect.
pub fn apply_parameter_transform(
    p: &ModelParams,
    kind: TransformKind,
) -> (ModelParams, TransformEffect) {
    let mut q = p.clone();
    let t = p.tau.value();
    let real = p.eta_kind == EtaKind::Real;
    let effect = match kind {
        TransformKind::SwapPM => {
            std::mem::swap(&mut q.beta_minus, &mut q.beta_plus);
            TransformEffect::SpectrumInvariant
        }
        TransformKind::NegateBoth => {
            q.beta_minus = q.beta_minus.map(|b| -b);
            q.beta_plus = q.beta_plus.map(|b| -b);
            TransformEffect::SpectrumInvariant
        }
        TransformKind::B1ReflectHalf => {
            if real {
                q.beta_plus[0] = 1.0 - q.beta_plus[0];
                TransformEffect::FieldFlip(FieldAxes::Z)
            } else {
                q.beta_plus[0] = t - q.beta_plus[0];
                TransformEffect::FieldFlip(FieldAxes::X)
            }
        }
        TransformKind::B1PlusOne => {
            q.beta_plus[0] += 1.0;
            if real {
                TransformEffect::ParitySwapEquivalent(FieldAxes::XY)
            } else {
                TransformEffect::FieldFlip(FieldAxes::XY)
            }
        }
        TransformKind::B1PlusTau => {
            q.beta_plus[0] += t;
            if real {
                TransformEffect::FieldFlip(FieldAxes::YZ)
            } else {
                TransformEffect::ParitySwapEquivalent(FieldAxes::YZ)
            }
        }
    };
    (q, effect)
}

/// How the dual reflection equation shifts its middle argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualShift {
    /// `−u₁ − u₂ − 2η`, the form consistent with crossing.
    TwoEta,
    /// `−u₁ − u₂ − 2`, a deliberately wrong shift kept as a diagnostic.
    LiteralTwo,
}

/// Worst normalized residual of each algebraic identity over random points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub yang_baxter: f64,
    pub reflection: f64,
    pub dual_reflection: f64,
    pub unitarity: f64,
    pub crossing: f64,
    pub z2_symmetry: f64,
    pub initial_condition: f64,
    pub antisymmetry: f64,
    /// `[t(u), t(v)]`, present when the chain is small enough to build densely.
    pub commutator: Option<f64>,
}

impl IntegrabilityReport {
    pub fn local_max(&self) -> f64 {
        [
            self.yang_baxter,
            self.reflection,
            self.dual_reflection,
            self.unitarity,
            self.crossing,
            self.z2_symmetry,
            self.initial_condition,
            self.antisymmetry,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn mat_rel(l: &DMatrix<C64>, r: &DMatrix<C64>) -> f64 {
    let diff = (l - r).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = l
        .iter()
        .chain(r.iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Embeds a two-site operator acting on factors `(i, j)` of an `n`-fold
/// product; factor 0 is the most significant index here.
fn embed2(m: &Matrix4<C64>, i: usize, j: usize, n: usize) -> DMatrix<C64> {
    let dim = 1 << n;
    let bit = |s: usize, k: usize| (s >> (n - 1 - k)) & 1;
    DMatrix::from_fn(dim, dim, |row, col| {
        for k in 0..n {
            if k != i && k != j && bit(row, k) != bit(col, k) {
                return c(0.0, 0.0);
            }
        }
        m[(2 * bit(row, i) + bit(row, j), 2 * bit(col, i) + bit(col, j))]
    })
}

fn embed1(m: &Matrix2<C64>, i: usize, n: usize) -> DMatrix<C64> {
    let dim = 1 << n;
    let bit = |s: usize, k: usize| (s >> (n - 1 - k)) & 1;
    DMatrix::from_fn(dim, dim, |row, col| {
        for k in 0..n {
            if k != i && bit(row, k) != bit(col, k) {
                return c(0.0, 0.0);
            }
        }
        m[(bit(row, i), bit(col, i))]
    })
}

fn swap_matrix() -> Matrix4<C64> {
    let mut p = Matrix4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            p[(2 * b + a, 2 * a + b)] = c(1.0, 0.0);
        }
    }
    p
}

/// Residuals of the Yang–Baxter, reflection, unitarity, crossing and symmetry
/// relations at `points` random spectral parameters drawn from `seed`.
pub fn integrability_report(
    p: &ModelParams,
    points: usize,
    seed: u64,
    dual: DualShift,
) -> Result<IntegrabilityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || c(rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3));
    let eta = p.eta;
    let tau = p.tau;
    let r = |u: C64| r_matrix(u, p);
    let perm = swap_matrix();
    let dual_shift = match dual {
        DualShift::TwoEta => 2.0 * eta,
        DualShift::LiteralTwo => c(2.0, 0.0),
    };
    let mut rep = IntegrabilityReport::default();
    let to_d = |m: Matrix4<C64>| DMatrix::from_iterator(4, 4, m.iter().cloned());
    for _ in 0..points {
        let (u1, u2, u3) = (draw(), draw(), draw());

        let lhs = embed2(&r(u1 - u2), 0, 1, 3)
            * embed2(&r(u1 - u3), 0, 2, 3)
            * embed2(&r(u2 - u3), 1, 2, 3);
        let rhs = embed2(&r(u2 - u3), 1, 2, 3)
            * embed2(&r(u1 - u3), 0, 2, 3)
            * embed2(&r(u1 - u2), 0, 1, 3);
        rep.yang_baxter = rep.yang_baxter.max(mat_rel(&lhs, &rhs));

        let r12 = |u: C64| embed2(&r(u), 0, 1, 2);
        let r21 = |u: C64| embed2(&(perm * r(u) * perm), 0, 1, 2);
        let k1 = |m: Matrix2<C64>| embed1(&m, 0, 2);
        let k2 = |m: Matrix2<C64>| embed1(&m, 1, 2);

        let (km1, km2) = (k_minus(u1, p)?, k_minus(u2, p)?);
        let lhs = r12(u1 - u2) * k1(km1) * r21(u1 + u2) * k2(km2);
        let rhs = k2(km2) * r12(u1 + u2) * k1(km1) * r21(u1 - u2);
        rep.reflection = rep.reflection.max(mat_rel(&lhs, &rhs));

        let (kp1, kp2) = (k_plus(u1, p)?, k_plus(u2, p)?);
        let mid = -u1 - u2 - dual_shift;
        let lhs = r12(-u1 + u2) * k1(kp1) * r21(mid) * k2(kp2);
        let rhs = k2(kp2) * r12(mid) * k1(kp1) * r21(-u1 + u2);
        rep.dual_reflection = rep.dual_reflection.max(mat_rel(&lhs, &rhs));

        let xi = sigma(u1 - eta, tau) * sigma(u1 + eta, tau) / (sigma(eta, tau) * sigma(eta, tau));
        let lhs = r12(u1) * r21(-u1);
        let rhs = DMatrix::identity(4, 4) * (-xi);
        rep.unitarity = rep.unitarity.max(mat_rel(&lhs, &rhs));

        let v = Matrix2::new(c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let rc = r(-u1 - eta);
        let mut partial = Matrix4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for a2 in 0..2 {
                    for b2 in 0..2 {
                        partial[(2 * a + b, 2 * a2 + b2)] = rc[(2 * a + b2, 2 * a2 + b)];
                    }
                }
            }
        }
        let lhs = to_d(r(u1));
        let rhs = k1(v) * to_d(partial) * k1(v);
        rep.crossing = rep.crossing.max(mat_rel(&lhs, &rhs));

        for s in pauli() {
            let ss = embed1(&s, 0, 2) * embed1(&s, 1, 2);
            let ru = to_d(r(u1));
            rep.z2_symmetry = rep.z2_symmetry.max(mat_rel(&(&ss * &ru), &(&ru * &ss)));
        }
    }
    rep.initial_condition = mat_rel(&to_d(r(c(0.0, 0.0))), &to_d(perm));
    let antisym = (Matrix4::identity() - perm) * c(-1.0, 0.0);
    rep.antisymmetry = mat_rel(&to_d(r(-eta)), &to_d(antisym));

    if p.n_sites <= 6 {
        let (u, v) = (draw(), draw());
        let tu = transfer_matrix(u, p)?;
        let tv = transfer_matrix(v, p)?;
        let comm = &tu * &tv - &tv * &tu;
        rep.commutator = Some(comm.norm() / (tu.norm() * tv.norm()));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn real_params(n: usize) -> ModelParams {
        ModelParams::new(
            LatticeTau::imaginary(0.6).unwrap(),
            c(0.7, 0.0),
            n,
            [c(0.02, 0.0), c(0.02, 0.0), c(0.0, 0.03)],
            [c(0.04, 0.0), c(0.04, 0.0), c(0.0, 0.04)],
        )
        .unwrap()
    }

    pub(crate) fn imag_params(n: usize) -> ModelParams {
        ModelParams::new(
            LatticeTau::imaginary(1.6).unwrap(),
            c(0.0, 1.0),
            n,
            [c(0.0, 0.04), c(0.04, 0.0), c(0.0, 0.04)],
            [c(0.0, 0.08), c(0.1, 0.0), c(0.0, 0.08)],
        )
        .unwrap()
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_invalid_eta() {
        let tau = LatticeTau::imaginary(0.6).unwrap();
        let b = [c(0.1, 0.0); 3];
        assert!(ModelParams::new(tau, c(1.0, 0.0), 4, b, b).is_err());
        assert!(ModelParams::new(tau, c(0.0, 0.6), 4, b, b).is_err());
        assert!(ModelParams::new(tau, c(0.3, 0.1), 4, b, b).is_err());
    }

    #[test]
    fn coupling_orderings() {
        let cs = couplings(&real_params(4)).unwrap();
        assert!(cs.max_imag() < 1e-10);
        assert!(cs.jx.norm() > cs.jy.norm() && cs.jy.norm() > cs.jz.norm());
        let cs = couplings(&imag_params(4)).unwrap();
        assert!(cs.max_imag() < 1e-10);
        assert!(cs.jx.norm() < cs.jy.norm() && cs.jy.norm() < cs.jz.norm());
    }

    #[test]
    fn field_pole_is_reported() {
        let mut p = real_params(2);
        p.beta_minus[0] = c(0.0, 0.0);
        assert!(matches!(couplings(&p), Err(Error::Pole(_))));
    }

    #[test]
    fn r_matrix_special_points() {
        let p = real_params(2);
        let r0 = r_matrix(c(0.0, 0.0), &p);
        assert!((r0 - swap_matrix()).norm() < 1e-13);
        let r_eta = r_matrix(-p.eta, &p);
        let anti = (Matrix4::identity() - swap_matrix()) * c(-1.0, 0.0);
        assert!((r_eta - anti).norm() < 1e-12);
    }

    #[test]
    fn k_minus_starts_at_identity() {
        for p in [real_params(2), imag_params(2)] {
            let k = k_minus(c(0.0, 0.0), &p).unwrap();
            assert!((k - Matrix2::identity()).norm() < 1e-13);
        }
    }

    #[test]
    fn identities_for_both_kinds() {
        for p in [real_params(4), imag_params(4)] {
            let rep = integrability_report(&p, 5, 11, DualShift::TwoEta).unwrap();
            assert!(rep.local_max() < 1e-10, "{rep:?}");
            assert!(rep.commutator.unwrap() < 1e-9);
        }
    }

    #[test]
    fn literal_dual_shift_fails() {
        let rep = integrability_report(&real_params(2), 3, 5, DualShift::LiteralTwo).unwrap();
        assert!(rep.dual_reflection > 1e-4);
    }

    #[test]
    fn transfer_adjoint_relations() {
        let u = c(0.13, 0.07);
        let p = real_params(4)
            .with_inhomogeneities(vec![
                c(0.0, 0.01),
                c(0.0, -0.03),
                c(0.0, 0.02),
                c(0.0, 0.04),
            ])
            .unwrap();
        let a = transfer_matrix(u, &p).unwrap().adjoint();
        let b = transfer_matrix(u.conj(), &p).unwrap();
        assert!(max_abs(&(&a - &b)) < 1e-10 * max_abs(&b));
        let p = imag_params(4)
            .with_inhomogeneities(vec![
                c(0.01, 0.0),
                c(-0.03, 0.0),
                c(0.02, 0.0),
                c(0.04, 0.0),
            ])
            .unwrap();
        let a = transfer_matrix(u, &p).unwrap().adjoint();
        let b = transfer_matrix(-u.conj(), &p).unwrap();
        assert!(max_abs(&(&a - &b)) < 1e-10 * max_abs(&b));
    }

    #[test]
    fn both_hamiltonian_routes_agree() {
        for p in [real_params(3), imag_params(3)] {
            let h = hamiltonian(&p).unwrap();
            let ht = hamiltonian_from_transfer(&p).unwrap();
            assert!(max_abs(&(&h - &ht)) < 1e-8);
        }
    }

    #[test]
    fn hermiticity_follows_the_region() {
        let p = real_params(2);
        assert!(hermitian_region_check(&p).in_region);
        let h = hamiltonian(&p).unwrap();
        assert!(max_abs(&(&h - h.adjoint())) < 1e-12);

        let mut q = p.clone();
        q.beta_minus[2] = c(0.3, 0.03);
        let rep = hermitian_region_check(&q);
        assert!(!rep.in_region);
        assert!(rep
            .violated
            .iter()
            .any(|v| v.clause == "Re(β∓₃)=0 or 1" && v.side == Side::Minus));
        let h = hamiltonian(&q).unwrap();
        assert!(max_abs(&(&h - h.adjoint())) > 1e-3);

        let mut q = imag_params(2);
        q.beta_minus[0] = c(0.5, 0.04);
        let rep = hermitian_region_check(&q);
        assert!(rep.violated.iter().any(|v| v.clause == "Re(β∓₁)=0 or 1"));
    }

    #[test]
    fn field_flips_match_declared_effects() {
        let cases = [
            (real_params(2), TransformKind::B1ReflectHalf),
            (real_params(2), TransformKind::B1PlusOne),
            (real_params(2), TransformKind::B1PlusTau),
            (imag_params(2), TransformKind::B1ReflectHalf),
            (imag_params(2), TransformKind::B1PlusOne),
            (imag_params(2), TransformKind::B1PlusTau),
        ];
        for (p, kind) in cases {
            let before = couplings(&p).unwrap();
            let (q, effect) = apply_parameter_transform(&p, kind);
            let after = couplings(&q).unwrap();
            let axes = match effect {
                TransformEffect::FieldFlip(a) | TransformEffect::ParitySwapEquivalent(a) => a,
                TransformEffect::SpectrumInvariant => FieldAxes::default(),
            };
            for (k, flip) in axes.flips().into_iter().enumerate() {
                let sign = if flip { -1.0 } else { 1.0 };
                assert!(
                    (after.h_plus[k] - before.h_plus[k] * sign).norm() < 1e-10,
                    "{kind:?} axis {k}"
                );
                assert!((after.h_minus[k] - before.h_minus[k]).norm() < 1e-12);
            }
        }
        let (_, e) = apply_parameter_transform(&real_params(2), TransformKind::B1PlusOne);
        assert!(matches!(e, TransformEffect::ParitySwapEquivalent(_)));
    }
}
