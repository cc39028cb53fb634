//! Eigenstates of the commuting family, transfer-matrix eigenvalues `Λ(u)`,
//! and the zero roots that parameterize them.
//!
//! `Λ(u) = Λ₀ ∏ σ(u + z_l + η/2) σ(u − z_l + η/2)` over `N + 3` roots `z_l`.
//! Roots are reported in display coordinates: `z̄ = −i z` for real `η` and
//! `z` itself for imaginary `η`. In both cases the display lattice is
//! `W ℤ + i H ℤ`, with `(W, H) = (Im τ, 1)` for real `η` and `(1, Im τ)`
//! for imaginary `η`.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::elliptic::{lattice_distance, sigma, sigma_and_prime, zeta, C64};
use crate::error::{Error, Result};
use crate::lanczos::lowest_eigenpairs;
use crate::lattice::{
    boundary_constants, couplings, hamiltonian, transfer_matrix, EtaKind, ModelParams, Side,
    SpinHamiltonian, TransferOperator, DENSE_SITE_CAP, SITE_CAP,
};
use crate::thermo::{
    canonicalize, energy_scale, select_boundary_strings, Parity, RegimeDispatch, StateKind,
    StringSet, SubRegime,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Generic point at which `t(u)` splits degenerate energy levels.
pub const DEFAULT_RESOLVER: C64 = C64 { re: 0.11, im: 0.07 };
/// Largest chain handled by the Lanczos path.
pub const ITERATIVE_SITE_CAP: usize = 16;
/// Relative residual above which a state is not a joint eigenstate.
pub const EIGENSTATE_TOL: f64 = 1e-6;
/// Default distance threshold for root classification.
pub const DEFAULT_CLASSIFY_THRESHOLD: f64 = 0.03;

/// Weight of the anti-Hermitian part in the resolver `B = Re A + c·Im A`.
const RESOLVER_MIX: f64 = std::f64::consts::SQRT_2 - 1.0;
const DEGENERACY_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-10;
const LANCZOS_SEED: u64 = 0x5eed;
const PROBE_SEED: u64 = 7;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Full spectrum, `N ≤ 12`.
    Dense,
    /// Ground and first excited state by Lanczos, Hermitian chains only.
    IterativeGroundAndFirst,
}

/// Eigenstates of the commuting family with their energies.
#[derive(Clone, Debug)]
pub struct SpectrumSlice {
    /// Ascending. For inhomogeneous chains these are the eigenvalues of the
    /// conserved charge `σ(η)/σ'(0)·[d ln Λ/du(0) − (N−1)ζ(η) − 2ζ(2η)]`.
    pub energies: Vec<f64>,
    pub states: Vec<DVector<C64>>,
    pub resolver_point: C64,
    pub t_eigenvalues_at_u0: Vec<C64>,
}

impl SpectrumSlice {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

fn require_hermitian(p: &ModelParams) -> Result<()> {
    let cs = couplings(p)?;
    let scale = [cs.jx, cs.jy, cs.jz]
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    if cs.max_imag() > HERMITIAN_TOL * scale {
        return Err(Error::Unsupported(format!(
            "Hamiltonian is not Hermitian (largest imaginary coupling {:.3e})",
            cs.max_imag()
        )));
    }
    Ok(())
}

fn sandwich(op: &TransferOperator, psi: &DVector<C64>, buf: &mut [C64]) -> C64 {
    op.apply(psi.as_slice(), buf);
    let num: C64 = psi.iter().zip(buf.iter()).map(|(a, b)| a.conj() * b).sum();
    num / psi.norm_squared()
}

/// Hermitian matrix whose eigenvectors diagonalize a normal matrix `a`.
fn resolver_form(a: &DMatrix<C64>) -> DMatrix<C64> {
    let ad = a.adjoint();
    let re = (a + &ad) * c(0.5, 0.0);
    let im = (a - &ad) * c(0.0, -0.5);
    re + im * c(RESOLVER_MIX, 0.0)
}

/// Columns of `v` rotated so that `v† t(u0) v` is diagonal.
fn rotate_block(v: &DMatrix<C64>, op: &TransferOperator) -> DMatrix<C64> {
    let dim = v.nrows();
    let mut tv = DMatrix::<C64>::zeros(dim, v.ncols());
    let mut buf = vec![c(0.0, 0.0); dim];
    for j in 0..v.ncols() {
        let col: Vec<C64> = v.column(j).iter().copied().collect();
        op.apply(&col, &mut buf);
        tv.column_mut(j).copy_from_slice(&buf);
    }
    let a = v.adjoint() * tv;
    let u = resolver_form(&a).symmetric_eigen().eigenvectors;
    v * u
}

/// Sorts by energy, breaking near-ties by `Λ(u₀)`.
fn ordered(mut items: Vec<(f64, C64, DVector<C64>)>) -> Vec<(f64, C64, DVector<C64>)> {
    items.sort_by(|x, y| {
        let tol = DEGENERACY_TOL * x.0.abs().max(1.0);
        if (x.0 - y.0).abs() > tol {
            x.0.total_cmp(&y.0)
        } else {
            x.1.re.total_cmp(&y.1.re).then(x.1.im.total_cmp(&y.1.im))
        }
    });
    items
}

/// Eigenstates of `H` (homogeneous chains) or of the whole family (inhomogeneous).
pub fn diagonalize(p: &ModelParams, how: Method) -> Result<SpectrumSlice> {
    diagonalize_at(p, how, DEFAULT_RESOLVER)
}

/// As [`diagonalize`] with an explicit resolver point.
pub fn diagonalize_at(p: &ModelParams, how: Method, u0: C64) -> Result<SpectrumSlice> {
    let op = TransferOperator::new(u0, p)?;
    let dim = p.dim();
    let mut buf = vec![c(0.0, 0.0); dim];
    let items = match how {
        Method::Dense if !p.is_homogeneous() => {
            if p.n_sites > DENSE_SITE_CAP {
                return Err(Error::Unsupported(format!(
                    "dense solver capped at {DENSE_SITE_CAP} sites"
                )));
            }
            let a = transfer_matrix(u0, p)?;
            let vecs = resolver_form(&a).symmetric_eigen().eigenvectors;
            let mut items = Vec::with_capacity(dim);
            for j in 0..dim {
                let psi: DVector<C64> = vecs.column(j).into_owned();
                let lam = sandwich(&op, &psi, &mut buf);
                let e = charge_eigenvalue(&psi, p)?;
                items.push((e, lam, psi));
            }
            items
        }
        Method::Dense => {
            if p.n_sites > DENSE_SITE_CAP {
                return Err(Error::Unsupported(format!(
                    "dense solver capped at {DENSE_SITE_CAP} sites"
                )));
            }
            require_hermitian(p)?;
            let h = hamiltonian(p)?;
            let h = (&h + h.adjoint()) * c(0.5, 0.0);
            let eig = h.symmetric_eigen();
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
            let mut items = Vec::with_capacity(dim);
            let mut start = 0;
            while start < dim {
                let e0 = eig.eigenvalues[order[start]];
                let mut end = start + 1;
                while end < dim
                    && (eig.eigenvalues[order[end]] - e0).abs()
                        <= DEGENERACY_TOL * e0.abs().max(1.0)
                {
                    end += 1;
                }
                let block = DMatrix::from_fn(dim, end - start, |i, j| {
                    eig.eigenvectors[(i, order[start + j])]
                });
                let block = if end - start > 1 {
                    rotate_block(&block, &op)
                } else {
                    block
                };
                for j in 0..block.ncols() {
                    let psi: DVector<C64> = block.column(j).into_owned();
                    let lam = sandwich(&op, &psi, &mut buf);
                    items.push((eig.eigenvalues[order[start + j]], lam, psi));
                }
                start = end;
            }
            items
        }
        Method::IterativeGroundAndFirst => {
            if p.n_sites > ITERATIVE_SITE_CAP.min(SITE_CAP) {
                return Err(Error::Unsupported(format!(
                    "iterative solver capped at {ITERATIVE_SITE_CAP} sites"
                )));
            }
            if !p.is_homogeneous() {
                return Err(Error::Unsupported(
                    "iterative solver needs a homogeneous chain".into(),
                ));
            }
            require_hermitian(p)?;
            let h = SpinHamiltonian::new(p)?;
            let pairs = lowest_eigenpairs(|x, y| h.apply(x, y), dim, 2, 1e-11, 600, LANCZOS_SEED)?;
            pairs
                .values
                .into_iter()
                .zip(pairs.vectors)
                .map(|(e, psi)| {
                    let lam = sandwich(&op, &psi, &mut buf);
                    (e, lam, psi)
                })
                .collect()
        }
    };
    let items = ordered(items);
    Ok(SpectrumSlice {
        energies: items.iter().map(|x| x.0).collect(),
        t_eigenvalues_at_u0: items.iter().map(|x| x.1).collect(),
        states: items.into_iter().map(|x| x.2).collect(),
        resolver_point: u0,
    })
}

/// `Λ(u)` as a sandwich, with the eigenvector residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaSample {
    pub value: C64,
    /// `‖t(u)ψ − Λψ‖ / ‖t(u)ψ‖`.
    pub residual: f64,
}

/// `⟨ψ|t(u)|ψ⟩/⟨ψ|ψ⟩`; fails when `ψ` is not an eigenvector of `t(u)`.
pub fn lambda_eval(u: C64, state: &DVector<C64>, p: &ModelParams) -> Result<LambdaSample> {
    if state.len() != p.dim() {
        return Err(Error::Domain(format!(
            "state of length {} for dimension {}",
            state.len(),
            p.dim()
        )));
    }
    let op = TransferOperator::new(u, p)?;
    let mut buf = vec![c(0.0, 0.0); p.dim()];
    let value = sandwich(&op, state, &mut buf);
    let tpsi = DVector::from_vec(buf);
    let scale = tpsi.norm();
    let residual = if scale == 0.0 {
        0.0
    } else {
        (&tpsi - state * value).norm() / scale
    };
    if residual > EIGENSTATE_TOL {
        return Err(Error::NotEigenstate(residual));
    }
    Ok(LambdaSample { value, residual })
}

/// Fast sandwich evaluator reused across many points.
struct LambdaFn<'a> {
    p: &'a ModelParams,
    psi: &'a DVector<C64>,
}

impl LambdaFn<'_> {
    fn at(&self, u: C64) -> Result<C64> {
        let op = TransferOperator::new(u, self.p)?;
        let mut buf = vec![c(0.0, 0.0); self.p.dim()];
        Ok(sandwich(&op, self.psi, &mut buf))
    }

    /// `Λ'(u)` from a 16-point Cauchy contour.
    fn derivative(&self, u: C64, radius: f64) -> Result<C64> {
        let n = 16;
        let mut acc = c(0.0, 0.0);
        for k in 0..n {
            let w = (I * (2.0 * PI * k as f64 / n as f64)).exp();
            acc += self.at(u + w * radius)? / w;
        }
        Ok(acc / (n as f64 * radius))
    }
}

fn charge_eigenvalue(psi: &DVector<C64>, p: &ModelParams) -> Result<f64> {
    let f = LambdaFn { p, psi };
    let log_der = f.derivative(c(0.0, 0.0), 0.02)? / f.at(c(0.0, 0.0))?;
    let e = energy_scale(p)
        * (log_der
            - (p.n_sites as f64 - 1.0) * zeta(p.eta, p.tau)?
            - 2.0 * zeta(2.0 * p.eta, p.tau)?);
    Ok(e.re)
}

// ---------------------------------------------------------------------------
// Special values and functional relations

fn sigma_eta_products(p: &ModelParams, shift: C64) -> C64 {
    let (tau, eta) = (p.tau, p.eta);
    let se = sigma(eta, tau);
    p.inhomogeneities
        .iter()
        .map(|&t| sigma(eta + shift + t, tau) * sigma(eta - shift - t, tau) / (se * se))
        .product()
}

/// Closed-form `Λ(0)`.
pub fn lambda_at_zero(p: &ModelParams) -> C64 {
    sigma(2.0 * p.eta, p.tau) / sigma(p.eta, p.tau) * sigma_eta_products(p, c(0.0, 0.0))
}

/// Closed-form `Λ` at the three nonzero half periods `1/2`, `τ/2`, `(1+τ)/2`.
pub fn lambda_at_half_periods(p: &ModelParams) -> Result<[C64; 3]> {
    let (tau, eta, n) = (p.tau, p.eta, p.n_sites as f64);
    let t = tau.value();
    let cm = boundary_constants(p, Side::Minus)?;
    let cp = boundary_constants(p, Side::Plus)?;
    let base = sigma(2.0 * eta, tau) / sigma(eta, tau);
    let sign = if p.n_sites.is_multiple_of(2) {
        -1.0
    } else {
        1.0
    };
    let sum_theta: C64 = p.inhomogeneities.iter().sum();
    let phase = (-I * PI * ((n + 3.0) * eta + t - 2.0 * sum_theta)).exp();
    let half = c(0.5, 0.0);
    Ok([
        sign * cm[2] * cp[2] * base * sigma_eta_products(p, half),
        sign * cm[0] * cp[0] * base * phase * sigma_eta_products(p, t / 2.0),
        -sign * cm[1] * cp[1] * base * phase * sigma_eta_products(p, (1.0 + t) / 2.0),
    ])
}

/// `Δ_q(u)`.
pub fn quantum_determinant(u: C64, p: &ModelParams) -> C64 {
    let (tau, eta) = (p.tau, p.eta);
    let se = sigma(eta, tau);
    let mut d = -sigma(2.0 * u + 2.0 * eta, tau) * sigma(2.0 * u - 2.0 * eta, tau) / (se * se);
    for side in [Side::Minus, Side::Plus] {
        for a in p.alpha(side) {
            let sa = sigma(a, tau);
            d *= sigma(u + a, tau) * sigma(u - a, tau) / (sa * sa);
        }
    }
    for &t in &p.inhomogeneities {
        d *= sigma(u + t + eta, tau)
            * sigma(u + t - eta, tau)
            * sigma(u - t + eta, tau)
            * sigma(u - t - eta, tau)
            / (se * se * se * se);
    }
    d
}

fn rel(a: C64, b: C64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Relative residuals of the exact identities satisfied by `Λ(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    /// Worst fusion residual over the inhomogeneity points.
    pub fusion: f64,
    /// `Λ` at `0`, `1/2`, `τ/2`, `(1+τ)/2`.
    pub special_values: [f64; 4],
    pub crossing: f64,
    pub period_one: f64,
    pub period_tau: f64,
}

impl FunctionalReport {
    pub fn max(&self) -> f64 {
        self.special_values
            .iter()
            .copied()
            .chain([self.fusion, self.crossing, self.period_one, self.period_tau])
            .fold(0.0, f64::max)
    }
}

/// Probe point for crossing and quasi-periodicity.
pub const RELATION_PROBE: C64 = C64 { re: 0.2, im: 0.1 };

pub fn validate_functional_relations(
    state: &DVector<C64>,
    p: &ModelParams,
) -> Result<FunctionalReport> {
    let f = |u: C64| lambda_eval(u, state, p).map(|s| s.value);
    let (tau, eta) = (p.tau, p.eta);
    let t = tau.value();
    let se = sigma(eta, tau);
    let mut fusion: f64 = 0.0;
    for &th in &p.inhomogeneities {
        let lhs = f(th)? * f(th - eta)?;
        let rhs = -quantum_determinant(th, p) * se * se
            / (sigma(2.0 * th + eta, tau) * sigma(2.0 * th - eta, tau));
        fusion = fusion.max(rel(lhs, rhs));
    }
    let halves = lambda_at_half_periods(p)?;
    let special_values = [
        rel(f(c(0.0, 0.0))?, lambda_at_zero(p)),
        rel(f(c(0.5, 0.0))?, halves[0]),
        rel(f(t / 2.0)?, halves[1]),
        rel(f((1.0 + t) / 2.0)?, halves[2]),
    ];
    let u = RELATION_PROBE;
    let lu = f(u)?;
    let n3 = p.n_sites as f64 + 3.0;
    Ok(FunctionalReport {
        fusion,
        special_values,
        crossing: rel(f(-u - eta)?, lu),
        period_one: rel(f(u + 1.0)?, lu),
        period_tau: rel(
            f(u + t)?,
            (-2.0 * I * PI * n3 * (2.0 * u + eta + t)).exp() * lu,
        ),
    })
}

// ---------------------------------------------------------------------------
// Zero roots

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RootTag {
    BulkLine,
    ConjugatePair,
    BoundaryString,
    FixedPair,
    Unknown,
}

impl RootTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BulkLine => "BulkLine",
            Self::ConjugatePair => "ConjugatePair",
            Self::BoundaryString => "BoundaryString",
            Self::FixedPair => "FixedPair",
            Self::Unknown => "Unknown",
        }
    }
}

/// The `N + 3` zero roots of one eigenvalue and its leading coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Display coordinates, reduced to the fundamental domain.
    pub roots: Vec<C64>,
    pub lambda0: C64,
    pub tags: Vec<RootTag>,
    pub eta_kind: EtaKind,
    /// Worst relative mismatch of the reconstruction at the probe points.
    pub reconstruction_error: f64,
}

/// One exported root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootRecord {
    pub re: f64,
    pub im: f64,
    pub tag: RootTag,
}

impl RootSet {
    /// Roots in the `z` coordinate of the parameterization.
    pub fn z_roots(&self) -> Vec<C64> {
        self.roots
            .iter()
            .map(|&w| from_display(w, self.eta_kind))
            .collect()
    }

    /// `Λ₀ ∏ σ(u + z_l + η/2) σ(u − z_l + η/2)`.
    pub fn reconstruct(&self, u: C64, p: &ModelParams) -> C64 {
        product_form(u, &self.z_roots(), self.lambda0, p)
    }

    pub fn records(&self) -> Vec<RootRecord> {
        self.roots
            .iter()
            .zip(&self.tags)
            .map(|(w, &tag)| RootRecord {
                re: w.re,
                im: w.im,
                tag,
            })
            .collect()
    }

    pub fn count(&self, tag: RootTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }
}

fn to_display(z: C64, kind: EtaKind) -> C64 {
    match kind {
        EtaKind::Real => -I * z,
        EtaKind::PureImaginary => z,
    }
}

fn from_display(w: C64, kind: EtaKind) -> C64 {
    match kind {
        EtaKind::Real => I * w,
        EtaKind::PureImaginary => w,
    }
}

/// Display-lattice periods `(W, H)`.
fn display_periods(p: &ModelParams) -> (f64, f64) {
    match p.eta_kind {
        EtaKind::Real => (p.tau.height(), 1.0),
        EtaKind::PureImaginary => (1.0, p.tau.height()),
    }
}

/// Display-coordinate `η`: the offset of conjugate pairs from the axis.
fn display_eta(p: &ModelParams) -> f64 {
    match p.eta_kind {
        EtaKind::Real => p.eta.re,
        EtaKind::PureImaginary => p.eta.im,
    }
}

/// Centered lattice reduction in display coordinates.
fn centered(w: C64, (pw, ph): (f64, f64)) -> C64 {
    c(
        w.re - (w.re / pw).round() * pw,
        w.im - (w.im / ph).round() * ph,
    )
}

/// Representative with the smallest `|Im|`, then smallest `|Re|`, ties nonnegative.
fn fundamental(w: C64, per: (f64, f64)) -> C64 {
    const EDGE: f64 = 1e-9;
    let mut r = centered(w, per);
    if r.im < 0.0 {
        r = centered(-r, per);
    }
    if r.im < 0.0 {
        r.im += per.1;
    }
    let on_edge = r.im.abs() < EDGE || (r.im - per.1 / 2.0).abs() < EDGE;
    if on_edge && r.re < 0.0 {
        r.re = -r.re;
    }
    if (r.re + per.0 / 2.0).abs() < EDGE {
        r.re = per.0 / 2.0;
    }
    r
}

/// Distance between root classes modulo the display lattice and `±`.
fn class_distance(a: C64, b: C64, per: (f64, f64)) -> f64 {
    centered(a - b, per).norm().min(centered(a + b, per).norm())
}

fn product_form(u: C64, z: &[C64], lambda0: C64, p: &ModelParams) -> C64 {
    let h = p.eta / 2.0;
    lambda0
        * z.iter()
            .map(|&r| sigma(u + r + h, p.tau) * sigma(u - r + h, p.tau))
            .product::<C64>()
}

/// Grid and acceptance settings for root extraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootOptions {
    /// Points per side of the initial grid.
    pub grid: usize,
    /// Doublings of the grid allowed after a failed reconstruction.
    pub rescans: usize,
    pub probes: usize,
    /// Largest accepted relative reconstruction error.
    pub tolerance: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            grid: 80,
            rescans: 2,
            probes: 50,
            tolerance: 1e-7,
        }
    }
}

pub fn find_zero_roots(state: &DVector<C64>, p: &ModelParams) -> Result<RootSet> {
    find_zero_roots_with(state, p, &RootOptions::default())
}

pub fn find_zero_roots_with(
    state: &DVector<C64>,
    p: &ModelParams,
    opts: &RootOptions,
) -> Result<RootSet> {
    lambda_eval(DEFAULT_RESOLVER, state, p)?;
    let f = LambdaFn { p, psi: state };
    let mut grid = opts.grid.max(8);
    let mut last_err = f64::INFINITY;
    for _ in 0..=opts.rescans {
        match extract(&f, grid, opts) {
            Ok(rs) => return Ok(rs),
            Err(Error::Extraction(msg)) => {
                last_err = msg.parse().unwrap_or(f64::INFINITY);
            }
            Err(e) => return Err(e),
        }
        grid *= 2;
    }
    Err(Error::Extraction(format!(
        "no consistent set of {} roots after {} rescans (worst reconstruction error {last_err:.3e})",
        p.n_sites + 3,
        opts.rescans
    )))
}

/// `F(z) = Λ(z − η/2)` has zeros exactly at `±z_l`.
fn shifted(f: &LambdaFn, z: C64) -> Result<C64> {
    f.at(z - f.p.eta / 2.0)
}

fn deflation_log_derivative(z: C64, found: &[C64], p: &ModelParams) -> C64 {
    found
        .iter()
        .map(|&r| {
            let (s1, d1) = sigma_and_prime(z - r, p.tau);
            let (s2, d2) = sigma_and_prime(z + r, p.tau);
            d1 / s1 + d2 / s2
        })
        .sum()
}

/// Newton iteration on `F(z) / ∏ σ(z − r)σ(z + r)`.
fn newton(f: &LambdaFn, mut z: C64, others: &[C64]) -> Result<C64> {
    const STEP: f64 = 1e-6;
    for _ in 0..80 {
        let v = shifted(f, z)?;
        if v == c(0.0, 0.0) {
            break;
        }
        let dv = (shifted(f, z + STEP)? - shifted(f, z - STEP)?) / (2.0 * STEP);
        let d = dv / v - deflation_log_derivative(z, others, f.p);
        let mut step = -1.0 / d;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        if step.norm() > 0.05 {
            step *= 0.05 / step.norm();
        }
        z += step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    Ok(z)
}

fn half_periods(p: &ModelParams) -> [C64; 4] {
    let t = p.tau.value();
    [c(0.0, 0.0), c(0.5, 0.0), t / 2.0, (1.0 + t) / 2.0]
}

fn snap(z: C64, p: &ModelParams) -> Option<C64> {
    half_periods(p)
        .into_iter()
        .find(|&w| lattice_distance(z - w, p.tau) < 1e-5)
}

/// One extraction pass; on failure the message carries the reconstruction error.
fn extract(f: &LambdaFn, g: usize, opts: &RootOptions) -> Result<RootSet> {
    let p = f.p;
    let n_roots = p.n_sites + 3;
    let t = p.tau.height();
    let slope = 2.0 * PI * (p.n_sites as f64 + 3.0) / t;
    let mut points = Vec::with_capacity(g * g);
    let mut level = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            let z = c(
                -0.5 + (i as f64 + 0.5) / g as f64,
                t * (-0.5 + (j as f64 + 0.5) / g as f64),
            );
            let v = shifted(f, z)?;
            points.push(z);
            level.push(v.norm().ln() - slope * z.im * z.im);
        }
    }
    let mut deflation = vec![0.0; points.len()];
    let mut found: Vec<C64> = Vec::with_capacity(n_roots);
    let mut snapped = Vec::with_capacity(n_roots);
    for _ in 0..n_roots {
        let start = (0..points.len())
            .filter(|&k| (level[k] - deflation[k]).is_finite())
            .min_by(|&a, &b| (level[a] - deflation[a]).total_cmp(&(level[b] - deflation[b])))
            .ok_or_else(|| Error::Numeric("level map has no finite values".into()))?;
        let mut r = newton(f, points[start], &found)?;
        let s = snap(r, p);
        if let Some(w) = s {
            r = w;
        }
        snapped.push(s.is_some());
        for (k, &z) in points.iter().enumerate() {
            let v = sigma(z - r, p.tau) * sigma(z + r, p.tau);
            deflation[k] += v.norm().ln() - 2.0 * PI * z.im * z.im / t;
        }
        found.push(r);
    }
    // Polish each root against the others.
    for k in 0..n_roots {
        if snapped[k] {
            continue;
        }
        let others: Vec<C64> = found
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &r)| r)
            .collect();
        found[k] = newton(f, found[k], &others)?;
    }
    let per = display_periods(p);
    let display: Vec<C64> = found
        .iter()
        .map(|&z| fundamental(to_display(z, p.eta_kind), per))
        .collect();
    let z_roots: Vec<C64> = display
        .iter()
        .map(|&w| from_display(w, p.eta_kind))
        .collect();
    let h = p.eta / 2.0;
    let denom: C64 = z_roots
        .iter()
        .map(|&r| sigma(h + r, p.tau) * sigma(h - r, p.tau))
        .product();
    let lambda0 = lambda_at_zero(p) / denom;
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.probes {
        let u = c(rng.random_range(-0.5..0.5), t * rng.random_range(-0.5..0.5));
        worst = worst.max(rel(f.at(u)?, product_form(u, &z_roots, lambda0, p)));
    }
    if worst.is_nan() || worst > opts.tolerance {
        return Err(Error::Extraction(format!("{worst}")));
    }
    Ok(RootSet {
        tags: vec![RootTag::Unknown; display.len()],
        roots: display,
        lambda0,
        eta_kind: p.eta_kind,
        reconstruction_error: worst,
    })
}

/// `σ(η)/σ'(0)·[Σ(ζ(z+η/2) − ζ(z−η/2)) − (N−1)ζ(η) − 2ζ(2η)]`.
pub fn energy_from_roots(rs: &RootSet, p: &ModelParams) -> Result<f64> {
    let (tau, eta) = (p.tau, p.eta);
    let h = eta / 2.0;
    let mut acc = c(0.0, 0.0);
    for z in rs.z_roots() {
        acc += zeta(z + h, tau)? - zeta(z - h, tau)?;
    }
    let e = energy_scale(p)
        * (acc - (p.n_sites as f64 - 1.0) * zeta(eta, tau)? - 2.0 * zeta(2.0 * eta, tau)?);
    Ok(e.re)
}

// ---------------------------------------------------------------------------
// Classification

/// Predicted boundary-string positions in display coordinates.
fn string_candidates(p: &ModelParams) -> Vec<C64> {
    let mut out = Vec::new();
    // Bare forms ±(η/2 ± α_l^γ).
    for side in [Side::Minus, Side::Plus] {
        for a in p.alpha(side) {
            for eps in [1.0, -1.0] {
                out.push(to_display(p.eta / 2.0 + eps * a, p.eta_kind));
            }
        }
    }
    // Selected positions for every parity and state.
    for parity in [Parity::Even, Parity::Odd] {
        for state in [StateKind::Ground, StateKind::FirstExcited] {
            let Ok(d) = RegimeDispatch::new(p, parity, state) else {
                continue;
            };
            if canonicalize(p, parity).is_err() {
                continue;
            }
            if let Ok(s) = select_boundary_strings(&d, p) {
                out.extend(s.all().filter(|w| !s.fixed_pair.contains(w)));
            }
        }
    }
    out
}

fn fixed_pair(p: &ModelParams) -> [C64; 2] {
    let (w, h) = display_periods(p);
    let e = display_eta(p);
    let y = (h - e) / 2.0;
    match p.eta_kind {
        EtaKind::Real => [c(0.0, y), c(w / 2.0, y)],
        EtaKind::PureImaginary => [c(0.0, y), c(0.5, y)],
    }
}

pub fn classify_roots(rs: &RootSet, p: &ModelParams) -> Result<RootSet> {
    classify_roots_with(rs, p, DEFAULT_CLASSIFY_THRESHOLD)
}

/// Tags each root by its nearest predicted locus within `threshold`.
pub fn classify_roots_with(rs: &RootSet, p: &ModelParams, threshold: f64) -> Result<RootSet> {
    let sub = crate::thermo::sub_regime(p)?;
    let per = display_periods(p);
    let eta = display_eta(p);
    // Distance from a reduced root to the bulk locus of the regime.
    let bulk_distance = |w: C64| match sub {
        SubRegime::Large => (w.im - per.1 / 2.0).abs(),
        SubRegime::Small => (w.im.abs() - eta).abs(),
    };
    let bulk_tag = match sub {
        SubRegime::Large => RootTag::BulkLine,
        SubRegime::Small => RootTag::ConjugatePair,
    };
    let fixed = fixed_pair(p);
    let (on_locus, off_locus): (Vec<C64>, Vec<C64>) = string_candidates(p)
        .into_iter()
        .map(|w| fundamental(w, per))
        .partition(|&w| bulk_distance(w) < threshold);
    let near = |w: C64, set: &[C64]| set.iter().any(|&s| class_distance(w, s, per) < threshold);
    let tags = rs
        .roots
        .iter()
        .map(|&w| {
            if near(w, &fixed) {
                RootTag::FixedPair
            } else if near(w, &off_locus) {
                RootTag::BoundaryString
            } else if bulk_distance(w) < threshold {
                bulk_tag
            } else if (w.im - per.1 / 2.0).abs() < threshold {
                RootTag::BulkLine
            } else if near(w, &on_locus) {
                RootTag::BoundaryString
            } else {
                RootTag::Unknown
            }
        })
        .collect();
    Ok(RootSet { tags, ..rs.clone() })
}

/// Distance from the nearest root of `rs` to `target`, modulo lattice and sign.
pub fn nearest_root_distance(rs: &RootSet, p: &ModelParams, target: C64) -> f64 {
    let per = display_periods(p);
    rs.roots
        .iter()
        .map(|&w| class_distance(w, target, per))
        .fold(f64::INFINITY, f64::min)
}

/// Largest distance from a predicted string position to its nearest root.
pub fn string_offset(rs: &RootSet, p: &ModelParams, strings: &StringSet) -> f64 {
    strings
        .all()
        .map(|w| nearest_root_distance(rs, p, w))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::LatticeTau;

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

    #[test]
    fn fundamental_domain_is_canonical() {
        let per = (0.6, 1.0);
        let w = fundamental(c(0.1, -0.2), per);
        assert!((w - c(-0.1, 0.2)).norm() < 1e-15);
        let w = fundamental(c(-0.1, 0.5), per);
        assert!((w - c(0.1, 0.5)).norm() < 1e-15);
        let w = fundamental(c(0.25 + 0.6, 1.3), per);
        assert!((w - c(0.25, 0.3)).norm() < 1e-12);
        assert!(class_distance(c(0.1, 0.2), c(-0.1 + 0.6, -0.2 + 3.0), per) < 1e-12);
    }

    #[test]
    fn dense_states_are_joint_eigenstates() {
        for p in [real_params(5), imag_params(5)] {
            let s = diagonalize(&p, Method::Dense).unwrap();
            let h = hamiltonian(&p).unwrap();
            let t = transfer_matrix(DEFAULT_RESOLVER, &p).unwrap();
            assert!(s.energies.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            for k in 0..s.len() {
                let psi = &s.states[k];
                assert!((&h * psi - psi * c(s.energies[k], 0.0)).norm() < 1e-9);
                assert!((&t * psi - psi * s.t_eigenvalues_at_u0[k]).norm() < 1e-8 * t.norm());
            }
        }
    }

    #[test]
    fn iterative_matches_dense() {
        let p = real_params(7);
        let dense = diagonalize(&p, Method::Dense).unwrap();
        let it = diagonalize(&p, Method::IterativeGroundAndFirst).unwrap();
        for k in 0..2 {
            assert!((dense.energies[k] - it.energies[k]).abs() < 1e-9);
            assert!(rel(dense.t_eigenvalues_at_u0[k], it.t_eigenvalues_at_u0[k]) < 1e-7);
        }
    }

    #[test]
    fn zero_field_chain_has_spin_flip_symmetry() {
        // β₃ = 0 on both sides and β₁ = β₂ = 0 switch every field off.
        let z = c(0.0, 0.0);
        let p = ModelParams::new(
            LatticeTau::imaginary(0.6).unwrap(),
            c(0.7, 0.0),
            2,
            [z; 3],
            [z; 3],
        )
        .unwrap();
        let cs = couplings(&p);
        if let Ok(cs) = cs {
            let zero_fields = cs
                .h_minus
                .iter()
                .chain(&cs.h_plus)
                .all(|h| h.norm() < 1e-12);
            if zero_fields {
                let s = diagonalize(&p, Method::Dense).unwrap();
                let h = hamiltonian(&p).unwrap();
                let flip = DMatrix::<C64>::from_fn(4, 4, |i, j| {
                    if i == 3 - j {
                        c(1.0, 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                });
                assert!((&flip * &h * &flip - &h).norm() < 1e-12);
                assert_eq!(s.len(), 4);
            }
        }
    }

    #[test]
    fn non_hermitian_iterative_is_rejected() {
        let mut p = real_params(4);
        p.beta_minus[0] = c(0.02, 0.01);
        assert!(matches!(
            diagonalize(&p, Method::IterativeGroundAndFirst),
            Err(Error::Unsupported(_))
        ));
    }

    fn inhomogeneous(p: ModelParams) -> ModelParams {
        let th = match p.eta_kind {
            EtaKind::Real => vec![c(0.0, 0.031), c(0.0, -0.047), c(0.0, 0.089)],
            EtaKind::PureImaginary => vec![c(0.031, 0.0), c(-0.047, 0.0), c(0.089, 0.0)],
        };
        p.with_inhomogeneities(th).unwrap()
    }

    #[test]
    fn functional_relations_hold_per_state() {
        for p in [inhomogeneous(real_params(3)), inhomogeneous(imag_params(3))] {
            let s = diagonalize(&p, Method::Dense).unwrap();
            assert_eq!(s.len(), 8);
            for psi in &s.states {
                let r = validate_functional_relations(psi, &p).unwrap();
                assert!(r.max() < 1e-8, "{r:?}");
            }
        }
    }

    #[test]
    fn charge_matches_hamiltonian_when_homogeneous() {
        let p = real_params(4);
        let s = diagonalize(&p, Method::Dense).unwrap();
        for (e, psi) in s.energies.iter().zip(&s.states) {
            assert!((charge_eigenvalue(psi, &p).unwrap() - e).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_eval_flags_non_eigenstates() {
        let p = real_params(4);
        let s = diagonalize(&p, Method::Dense).unwrap();
        let mix = (&s.states[0] + &s.states[1]) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!(matches!(
            lambda_eval(c(0.3, 0.1), &mix, &p),
            Err(Error::NotEigenstate(_))
        ));
        assert!(lambda_eval(c(0.3, 0.1), &s.states[0], &p).unwrap().residual < 1e-9);
    }

    #[test]
    fn roots_reconstruct_and_reproduce_energies() {
        for p in [real_params(6), imag_params(6)] {
            let s = diagonalize(&p, Method::Dense).unwrap();
            for k in [0, 1, 5, 17] {
                let rs = find_zero_roots(&s.states[k], &p).unwrap();
                assert_eq!(rs.roots.len(), 9);
                assert!(rs.reconstruction_error < 1e-7);
                let e = energy_from_roots(&rs, &p).unwrap();
                assert!(
                    (e - s.energies[k]).abs() < 1e-7,
                    "state {k}: {e} vs {}",
                    s.energies[k]
                );
                let w = fixed_pair(&p);
                if k < 2 {
                    assert!(nearest_root_distance(&rs, &p, w[0]) < 5e-2);
                    assert!(nearest_root_distance(&rs, &p, w[1]) < 5e-2);
                }
            }
        }
    }

    #[test]
    fn ground_state_root_pattern() {
        let p = real_params(8);
        let s = diagonalize(&p, Method::Dense).unwrap();
        let rs = classify_roots(&find_zero_roots(&s.states[0], &p).unwrap(), &p).unwrap();
        assert_eq!(rs.roots.len(), 11);
        assert_eq!(rs.count(RootTag::FixedPair), 2, "{:?}", rs.records());
        assert_eq!(rs.count(RootTag::Unknown), 0, "{:?}", rs.records());
        assert_eq!(rs.count(RootTag::BoundaryString), 4);
        assert_eq!(rs.count(RootTag::BulkLine), 5);
    }

    #[test]
    fn boundary_strings_follow_the_laws() {
        for p in [
            real_params(8),
            real_params(9),
            imag_params(8),
            imag_params(9),
        ] {
            let s = diagonalize(&p, Method::Dense).unwrap();
            for (k, state) in [StateKind::Ground, StateKind::FirstExcited]
                .into_iter()
                .enumerate()
            {
                let rs = find_zero_roots(&s.states[k], &p).unwrap();
                let d = RegimeDispatch::for_chain(&p, state).unwrap();
                let strings = select_boundary_strings(&d, &p).unwrap();
                assert!(
                    string_offset(&rs, &p, &strings) < 5e-2,
                    "N={} state {k}",
                    p.n_sites
                );
            }
        }
    }
}
