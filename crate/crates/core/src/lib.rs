//! Continuous sampling trajectories built from travelling-salesman paths.
//!
//! Points are drawn i.i.d. from a drawing density on `[0,1]^d`, joined by a
//! short Hamiltonian path, and the resulting polyline is traversed at
//! constant speed. The arc-length measure of that curve tends to the
//! drawing density raised to `(d-1)/d`, so drawing from `target^(d/(d-1))`
//! produces a curve that follows `target`.
//!
//! Modules:
//! - [`density`]: grid densities, exponent maps, seeded sampling.
//! - [`tsp`]: Euclidean and boundary-quotient paths, heuristics, exact oracle.
//! - [`curve`]: constant-speed parametrization and per-cell arc-length measure.
//! - [`verify`]: convergence, BHH-ratio and lemma experiments.
//! - [`csmri`]: k-space masks, Fourier measurements, ℓ1-Haar reconstruction.
//! - [`io`]: text, CSV, PGM and JSON formats.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csmri;
pub mod curve;
pub mod density;
pub mod error;
pub mod io;
mod spatial;
pub mod tsp;
pub mod verify;

pub use curve::{Curve, EmpiricalMeasure};
pub use density::{DensityGrid, PointSet};
pub use error::{Error, Result};
pub use tsp::{Metric, Path, Region};
