//! Lanczos iteration with full reorthogonalization for the low end of a
//! Hermitian operator given only as a matrix-vector product.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::C64;
use crate::error::{Error, Result};

pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<C64>>,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest `count` eigenpairs of the Hermitian operator `apply`.
///
/// Converges when every wanted Ritz pair has residual below
/// `tol · max(1, |θ|)`; the Krylov space is capped at `max_krylov`.
pub(crate) fn lowest_eigenpairs(
    apply: impl Fn(&[C64], &mut [C64]),
    dim: usize,
    count: usize,
    tol: f64,
    max_krylov: usize,
    seed: u64,
) -> Result<Eigenpairs> {
    let cap = max_krylov.min(dim);
    if count == 0 || count > cap {
        return Err(Error::Numeric(format!(
            "cannot extract {count} pairs from a Krylov space of {cap}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut basis: Vec<Vec<C64>> = vec![v];
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut w = vec![C64::new(0.0, 0.0); dim];
    loop {
        let j = basis.len() - 1;
        apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        // Two Gram-Schmidt passes against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        let exhausted = b <= 1e-13 * alpha.iter().fold(1.0_f64, |s, x| s.max(x.abs()));
        if m >= count && (m % 5 == 0 || exhausted || m == cap) {
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = t.symmetric_eigen();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
            let wanted = &order[..count];
            let converged = wanted.iter().all(|&i| {
                let theta = eig.eigenvalues[i];
                (b * eig.eigenvectors[(m - 1, i)]).abs() <= tol * theta.abs().max(1.0)
            });
            if converged || exhausted || m == cap {
                if !converged && !exhausted {
                    return Err(Error::Numeric(format!(
                        "Lanczos did not converge within {cap} vectors"
                    )));
                }
                let mut values = Vec::with_capacity(count);
                let mut vectors = Vec::with_capacity(count);
                for &i in wanted {
                    let mut x = DVector::<C64>::zeros(dim);
                    for (k, q) in basis.iter().enumerate() {
                        let s = eig.eigenvectors[(k, i)];
                        x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += qi * s);
                    }
                    let nx = x.norm();
                    values.push(eig.eigenvalues[i]);
                    vectors.push(x / C64::new(nx, 0.0));
                }
                return Ok(Eigenpairs { values, vectors });
            }
        }
        if exhausted {
            return Err(Error::Numeric(
                "Krylov space closed before enough pairs were found".into(),
            ));
        }
        beta.push(b);
        let next: Vec<C64> = w.iter().map(|x| x / b).collect();
        basis.push(next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solver() {
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = DMatrix::<C64>::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        a = &a + a.adjoint();
        let dense = a.clone().symmetric_eigen();
        let mut want: Vec<f64> = dense.eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let op = |x: &[C64], y: &mut [C64]| {
            let r = &a * DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        };
        let got = lowest_eigenpairs(op, n, 2, 1e-12, 60, 1).unwrap();
        for ((&value, vector), &expected) in got.values.iter().zip(&got.vectors).zip(&want) {
            assert!((value - expected).abs() < 1e-9);
            let r = &a * vector - vector * C64::new(value, 0.0);
            assert!(r.norm() < 1e-8);
        }
    }
}
