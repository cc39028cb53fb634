//! Exact finite-size spectra and thermodynamic-limit energies of the open
//! XYZ spin chain with non-diagonal boundary fields.

pub mod elliptic;
pub mod error;
mod lanczos;
pub mod lattice;
pub mod spectrum;
pub mod thermo;
pub mod xxz_limit;

pub use elliptic::{LatticeTau, ThetaChar, C64};
pub use error::{Error, Result};
pub use lattice::{
    CouplingSet, DualShift, EtaKind, ModelParams, Side, TransformEffect, TransformKind,
};
pub use spectrum::{FunctionalReport, Method, RootRecord, RootSet, RootTag, SpectrumSlice};
pub use thermo::{
    EnergyBreakdown, Parity, RegimeDispatch, StateKind, StringSet, SubRegime, Truncation,
};
pub use xxz_limit::{XXZParams, XXZTransform};
