//! The four subcommands. Each returns whether its verdict passed.

use crate::config::{Branch, MethodCfg, RunConfig};
use crate::output::{num, opt_num, write_csv, write_json, Provenance};
use openxyz::lattice::{
    hamiltonian, hamiltonian_from_transfer, hermitian_region_check, integrability_report,
};
use openxyz::spectrum::{
    classify_roots_with, diagonalize, find_zero_roots_with, lambda_eval, RootOptions,
};
use openxyz::thermo::{energy_breakdown, Truncation};
use openxyz::xxz_limit::xxz_energies;
use openxyz::{
    EnergyBreakdown, Error, LatticeTau, Method, ModelParams, Parity, RegimeDispatch, StateKind, C64,
};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

const DENSE_MAX_SITES: usize = 12;
const ITERATIVE_MAX_SITES: usize = 16;
const CHECK_MAX_SITES: usize = 6;
const HAMILTONIAN_THRESHOLD: f64 = 1e-8;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2, nothing written.
    Usage(String),
    /// A numerical step failed after output began: exit code 1.
    Numeric(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("cannot write output: {e}"))
    }
}

fn numeric(e: Error) -> CliError {
    CliError::Numeric(e.to_string())
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn truncation(cfg: &RunConfig) -> Truncation {
    Truncation::new(cfg.numerics.eps, cfg.numerics.kmax)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn parity_name(p: Parity) -> &'static str {
    match p {
        Parity::Even => "even",
        Parity::Odd => "odd",
    }
}

fn solver(method: MethodCfg, n: usize) -> Result<Method, CliError> {
    match method {
        MethodCfg::Dense if n <= DENSE_MAX_SITES => Ok(Method::Dense),
        MethodCfg::Iterative if n <= ITERATIVE_MAX_SITES => Ok(Method::IterativeGroundAndFirst),
        MethodCfg::Dense => Err(CliError::Usage(format!(
            "dense solver takes at most {DENSE_MAX_SITES} sites, got {n}"
        ))),
        MethodCfg::Iterative => Err(CliError::Usage(format!(
            "iterative solver takes at most {ITERATIVE_MAX_SITES} sites, got {n}"
        ))),
    }
}

#[derive(Serialize)]
struct CheckReport {
    verdict: &'static str,
    threshold: f64,
    commutator_threshold: f64,
    hamiltonian_threshold: f64,
    integrability: openxyz::lattice::IntegrabilityReport,
    hamiltonian_identity: f64,
    hermitian_region: openxyz::lattice::RegionReport,
}

pub fn check(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let p = cfg.model_params().map_err(usage)?;
    if p.n_sites > CHECK_MAX_SITES {
        return Err(CliError::Usage(format!(
            "check builds dense operators: n_sites must be at most {CHECK_MAX_SITES}"
        )));
    }
    let c = &cfg.check;
    let rep = integrability_report(&p, c.points, cfg.numerics.seed, c.dual_shift.into())
        .map_err(numeric)?;
    let hamiltonian_identity = if p.is_homogeneous() {
        let direct = hamiltonian(&p).map_err(numeric)?;
        let via_t = hamiltonian_from_transfer(&p).map_err(numeric)?;
        (direct - via_t)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let pass = rep.local_max() < c.threshold
        && rep.commutator.is_none_or(|x| x < c.commutator_threshold)
        && hamiltonian_identity < HAMILTONIAN_THRESHOLD;
    let report = CheckReport {
        verdict: verdict(pass),
        threshold: c.threshold,
        commutator_threshold: c.commutator_threshold,
        hamiltonian_threshold: HAMILTONIAN_THRESHOLD,
        integrability: rep,
        hamiltonian_identity,
        hermitian_region: hermitian_region_check(&p),
    };
    write_json(out, "check.json", &Provenance::of(cfg), &report)?;
    Ok(pass)
}

pub fn roots(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let p = cfg.model_params().map_err(usage)?;
    let how = solver(cfg.roots.method, p.n_sites)?;
    let prov = Provenance::of(cfg);
    let slice = diagonalize(&p, how).map_err(numeric)?;
    let count = cfg.roots.states.min(slice.len());
    let opts = RootOptions {
        grid: cfg.roots.grid,
        ..RootOptions::default()
    };
    let sets: Vec<_> = slice.states[..count]
        .par_iter()
        .map(|psi| {
            find_zero_roots_with(psi, &p, &opts)
                .and_then(|rs| classify_roots_with(&rs, &p, cfg.roots.threshold))
        })
        .collect();

    let mut rows = Vec::new();
    for (k, set) in sets.into_iter().enumerate() {
        match set {
            Ok(rs) => rows.extend(rs.records().into_iter().map(|r| {
                vec![
                    k.to_string(),
                    num(r.re),
                    num(r.im),
                    r.tag.as_str().to_string(),
                ]
            })),
            Err(Error::Extraction(msg)) => {
                let path = residual_map(&p, &slice.states[k], cfg.roots.grid, out, k, &prov)?;
                return Err(CliError::Numeric(format!(
                    "state {k}: {msg}; residual map written to {}",
                    path.display()
                )));
            }
            Err(e) => return Err(numeric(e)),
        }
    }
    write_csv(
        out,
        "roots.csv",
        &prov,
        &["state", "re", "im", "tag"],
        &rows,
    )?;
    Ok(true)
}

/// `log10|Λ(x + yτ − η/2)|` over the unit cell, written when extraction fails.
fn residual_map(
    p: &ModelParams,
    psi: &nalgebra::DVector<C64>,
    grid: usize,
    out: &Path,
    state: usize,
    prov: &Provenance,
) -> Result<std::path::PathBuf, CliError> {
    let g = grid.max(8);
    let tau = p.tau.value();
    let rows: Vec<Vec<String>> = (0..g * g)
        .into_par_iter()
        .map(|k| {
            let (x, y) = ((k % g) as f64 / g as f64, (k / g) as f64 / g as f64);
            let u = C64::new(x, 0.0) + tau * y - p.eta / 2.0;
            let level = lambda_eval(u, psi, p)
                .map(|s| s.value.norm().log10())
                .unwrap_or(f64::NAN);
            vec![num(x), num(y), num(level)]
        })
        .collect();
    Ok(write_csv(
        out,
        &format!("roots_residual_map_state{state}.csv"),
        prov,
        &["x", "y", "log10_abs_lambda"],
        &rows,
    )?)
}

fn breakdown_row(b: &EnergyBreakdown) -> Vec<String> {
    vec![
        num(b.e_bulk),
        num(b.e_free),
        num(b.e_right),
        num(b.e_left),
        num(b.strings_total()),
        num(b.parity_term),
        num(b.surface),
        opt_num(b.excitation),
    ]
}

const ENERGY_COLUMNS: [&str; 8] = [
    "e_bulk",
    "e_free",
    "e_plus",
    "e_minus",
    "e_strings",
    "parity_term",
    "e_surface",
    "delta_e",
];

fn energy_point(
    cfg: &RunConfig,
    value: Option<f64>,
    parity: Parity,
) -> openxyz::Result<EnergyBreakdown> {
    let tr = truncation(cfg);
    match cfg.energy.branch {
        Branch::Thermo => {
            let p = cfg.model_params_with(cfg.model.n_sites, value)?;
            energy_breakdown(&RegimeDispatch::new(&p, parity, StateKind::Ground)?, &p, tr)
        }
        Branch::Xxz => xxz_energies(&cfg.xxz_params(parity, value)?, tr),
    }
}

pub fn energy(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let values: Vec<Option<f64>> = match &cfg.sweep {
        Some(s) => s.values().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let parities: Vec<Parity> = cfg.energy.parities.iter().map(|&p| p.into()).collect();
    let jobs: Vec<(Option<f64>, Parity)> = values
        .iter()
        .flat_map(|&v| parities.iter().map(move |&p| (v, p)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(v, parity)| energy_point(cfg, v, parity))
        .collect();

    let mut all_ok = true;
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(results)
        .map(|(&(v, parity), r)| {
            let mut row = vec![opt_num(v), parity_name(parity).to_string()];
            match r {
                Ok(b) => {
                    row.extend(breakdown_row(&b));
                    row.push(String::new());
                }
                Err(e) => {
                    all_ok = false;
                    row.extend(std::iter::repeat_n(String::new(), ENERGY_COLUMNS.len()));
                    row.push(e.to_string());
                }
            }
            row
        })
        .collect();
    let mut header = vec!["sweep", "parity"];
    header.extend(ENERGY_COLUMNS);
    header.push("error");
    write_csv(out, "energy.csv", &Provenance::of(cfg), &header, &rows)?;
    Ok(all_ok)
}

#[derive(Serialize)]
struct SizeRow {
    n_sites: usize,
    parity: &'static str,
    e_ground: f64,
    gap: f64,
    bulk: f64,
    parity_term: f64,
    e_surface: f64,
    surface_discrepancy: f64,
    delta_e: f64,
    gap_discrepancy: f64,
}

#[derive(Serialize)]
struct Trend {
    parity: &'static str,
    quantity: &'static str,
    values: Vec<f64>,
    decreasing: bool,
    final_below_threshold: bool,
}

#[derive(Serialize)]
struct XxzRow {
    height: f64,
    parity: &'static str,
    component: &'static str,
    thermo: f64,
    xxz: f64,
    delta: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    verdict: &'static str,
    threshold: f64,
    sizes: Vec<SizeRow>,
    trends: Vec<Trend>,
    xxz_threshold: f64,
    xxz: Vec<XxzRow>,
}

fn size_row(cfg: &RunConfig, n: usize) -> Result<SizeRow, CliError> {
    let p = cfg.model_params_with(n, None).map_err(usage)?;
    let slice = diagonalize(&p, solver(cfg.validate.method, n)?).map_err(numeric)?;
    if slice.len() < 2 {
        return Err(CliError::Numeric(format!(
            "fewer than two states at n_sites = {n}"
        )));
    }
    let d = RegimeDispatch::for_chain(&p, StateKind::Ground).map_err(numeric)?;
    let b = energy_breakdown(&d, &p, truncation(cfg)).map_err(numeric)?;
    let (e0, gap) = (slice.energies[0], slice.energies[1] - slice.energies[0]);
    let delta_e = b.excitation.unwrap_or(0.0);
    Ok(SizeRow {
        n_sites: n,
        parity: parity_name(d.parity),
        e_ground: e0,
        gap,
        bulk: n as f64 * b.e_bulk,
        parity_term: b.parity_term,
        e_surface: b.surface,
        surface_discrepancy: (e0 - b.ground_energy(n)).abs(),
        delta_e,
        gap_discrepancy: (gap - delta_e).abs(),
    })
}

fn trend(parity: &'static str, quantity: &'static str, values: Vec<f64>, threshold: f64) -> Trend {
    Trend {
        parity,
        quantity,
        decreasing: values.windows(2).all(|w| w[1] < w[0]),
        final_below_threshold: values.last().is_some_and(|&x| x < threshold),
        values,
    }
}

fn xxz_rows(cfg: &RunConfig, height: f64, parity: Parity) -> Result<Vec<XxzRow>, CliError> {
    let base = cfg.model_params().map_err(usage)?;
    let tau = LatticeTau::new(C64::new(0.0, height)).map_err(usage)?;
    let p = ModelParams::new(tau, base.eta, base.n_sites, base.beta_minus, base.beta_plus)
        .map_err(usage)?;
    let tr = truncation(cfg);
    let th = energy_breakdown(
        &RegimeDispatch::new(&p, parity, StateKind::Ground).map_err(numeric)?,
        &p,
        tr,
    )
    .map_err(numeric)?;
    let xx = xxz_energies(&cfg.xxz_params(parity, None).map_err(usage)?, tr).map_err(numeric)?;
    let parts: [(&'static str, f64, f64); 7] = [
        ("e_bulk", th.e_bulk, xx.e_bulk),
        ("e_free", th.e_free, xx.e_free),
        ("e_plus", th.e_right, xx.e_right),
        ("e_minus", th.e_left, xx.e_left),
        ("e_strings", th.strings_total(), xx.strings_total()),
        ("parity_term", th.parity_term, xx.parity_term),
        (
            "delta_e",
            th.excitation.unwrap_or(0.0),
            xx.excitation.unwrap_or(0.0),
        ),
    ];
    Ok(parts
        .into_iter()
        .map(|(component, t, x)| XxzRow {
            height,
            parity: parity_name(parity),
            component,
            thermo: t,
            xxz: x,
            delta: (t - x).abs(),
        })
        .collect())
}

pub fn validate(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let v = &cfg.validate;
    let mut sizes = v.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    for &n in &sizes {
        solver(v.method, n)?;
    }
    let rows = sizes
        .par_iter()
        .map(|&n| size_row(cfg, n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut trends = Vec::new();
    for parity in ["even", "odd"] {
        let of: Vec<&SizeRow> = rows.iter().filter(|r| r.parity == parity).collect();
        if of.len() < 2 {
            continue;
        }
        trends.push(trend(
            parity,
            "surface",
            of.iter().map(|r| r.surface_discrepancy).collect(),
            v.threshold,
        ));
        if of.iter().all(|r| r.delta_e.abs() > 1e-12) {
            trends.push(trend(
                parity,
                "gap",
                of.iter().map(|r| r.gap_discrepancy).collect(),
                v.threshold,
            ));
        }
    }

    let mut heights = v.xxz_heights.clone();
    heights.sort_by(f64::total_cmp);
    let jobs: Vec<(f64, Parity)> = heights
        .iter()
        .flat_map(|&h| [Parity::Even, Parity::Odd].map(|p| (h, p)))
        .collect();
    let xxz: Vec<XxzRow> = jobs
        .par_iter()
        .map(|&(h, p)| xxz_rows(cfg, h, p))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let xxz_pass = heights.last().is_none_or(|&top| {
        xxz.iter()
            .filter(|r| r.height == top)
            .all(|r| r.delta < v.xxz_threshold)
    });

    let pass = xxz_pass
        && trends
            .iter()
            .all(|t| t.decreasing && t.final_below_threshold);
    let prov = Provenance::of(cfg);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n_sites.to_string(),
                r.parity.to_string(),
                num(r.e_ground),
                num(r.gap),
                num(r.bulk),
                num(r.parity_term),
                num(r.e_surface),
                num(r.surface_discrepancy),
                num(r.delta_e),
                num(r.gap_discrepancy),
            ]
        })
        .collect();
    write_csv(
        out,
        "validate.csv",
        &prov,
        &[
            "n_sites",
            "parity",
            "e_ground",
            "gap",
            "bulk",
            "parity_term",
            "e_surface",
            "surface_discrepancy",
            "delta_e",
            "gap_discrepancy",
        ],
        &table,
    )?;
    if !xxz.is_empty() {
        let xrows: Vec<Vec<String>> = xxz
            .iter()
            .map(|r| {
                vec![
                    num(r.height),
                    r.parity.to_string(),
                    r.component.to_string(),
                    num(r.thermo),
                    num(r.xxz),
                    num(r.delta),
                ]
            })
            .collect();
        write_csv(
            out,
            "validate_xxz.csv",
            &prov,
            &["height", "parity", "component", "thermo", "xxz", "delta"],
            &xrows,
        )?;
    }
    let report = ValidateReport {
        verdict: verdict(pass),
        threshold: v.threshold,
        sizes: rows,
        trends,
        xxz_threshold: v.xxz_threshold,
        xxz,
    };
    write_json(out, "validate.json", &prov, &report)?;
    Ok(pass)
}
