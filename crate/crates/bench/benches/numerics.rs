use criterion::{criterion_group, criterion_main, Criterion};
use openxyz::elliptic::{theta, ThetaChar};
use openxyz::lattice::TransferOperator;
use openxyz::spectrum::{diagonalize, find_zero_roots};
use openxyz::thermo::energy_breakdown;
use openxyz::{Method, Parity, RegimeDispatch, StateKind, C64};
use openxyz_bench::real_chain;
use std::hint::black_box;

fn elliptic(c: &mut Criterion) {
    let tau = openxyz::LatticeTau::imaginary(0.6).unwrap();
    let ch = ThetaChar::new(1, 2, 1, 2).unwrap();
    c.bench_function("theta", |b| {
        b.iter(|| theta(ch, black_box(C64::new(0.13, 0.21)), tau, 1e-16).unwrap())
    });
}

fn transfer(c: &mut Criterion) {
    let p = real_chain(12);
    let op = TransferOperator::new(C64::new(0.11, 0.07), &p).unwrap();
    let psi = vec![C64::new(1.0, 0.0); p.dim()];
    let mut out = vec![C64::new(0.0, 0.0); p.dim()];
    c.bench_function("transfer_apply_n12", |b| {
        b.iter(|| op.apply(black_box(&psi), &mut out))
    });
}

fn spectrum(c: &mut Criterion) {
    let p = real_chain(10);
    c.bench_function("lanczos_n10", |b| {
        b.iter(|| diagonalize(black_box(&p), Method::IterativeGroundAndFirst).unwrap())
    });
    let p6 = real_chain(6);
    let ground = diagonalize(&p6, Method::Dense)
        .unwrap()
        .states
        .swap_remove(0);
    let mut g = c.benchmark_group("roots");
    g.sample_size(10);
    g.bench_function("zero_roots_n6", |b| {
        b.iter(|| find_zero_roots(black_box(&ground), &p6).unwrap())
    });
    g.finish();
}

fn thermo(c: &mut Criterion) {
    let p = real_chain(8);
    let d = RegimeDispatch::new(&p, Parity::Even, StateKind::Ground).unwrap();
    c.bench_function("energy_breakdown", |b| {
        b.iter(|| energy_breakdown(&d, black_box(&p), 1e-16).unwrap())
    });
}

criterion_group!(benches, elliptic, transfer, spectrum, thermo);
criterion_main!(benches);
