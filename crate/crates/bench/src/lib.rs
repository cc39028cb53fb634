//! Shared fixtures for the benchmarks.

use openxyz::{LatticeTau, ModelParams, C64};

/// Real-η chain used across the benchmarks.
pub fn real_chain(n_sites: usize) -> ModelParams {
    let c = |re: f64, im: f64| C64::new(re, im);
    ModelParams::new(
        LatticeTau::imaginary(0.6).expect("valid modulus"),
        c(0.7, 0.0),
        n_sites,
        [c(0.02, 0.0), c(0.02, 0.0), c(0.0, 0.03)],
        [c(0.04, 0.0), c(0.04, 0.0), c(0.0, 0.04)],
    )
    .expect("valid parameters")
}
