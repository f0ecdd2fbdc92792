//! Piecewise-constant densities on the unit hypercube and i.i.d. point draws.
//!
//! A [`DensityGrid`] stores one density value per cell of a regular `g^d`
//! grid over `[0,1]^d`, flattened row-major with the last axis fastest.
//! Cell masses are `value * g^-d`.
//!
//! Two exponent maps connect what a user asks for with what must be drawn:
//! points drawn i.i.d. from `p` and joined by a short travelling-salesman
//! path produce a curve whose arc-length measure tends to
//! `p^((d-1)/d)` (normalized). To make the curve follow a target `t`, draw
//! from `t^(d/(d-1))` instead ([`DensityGrid::exponent_transform`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed of the `index`-th independent stream derived from `base`.
///
/// Every experiment that needs several independent draws (N levels,
/// trials, seeds of a sweep) uses this rule so results do not depend on
/// scheduling.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// The generator behind every draw: ChaCha8 seeded from a `u64`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    dim: usize,
    resolution: usize,
    values: Vec<f64>,
}

impl DensityGrid {
    /// Builds a grid from raw cell values. Values are checked but not normalized.
    pub fn new(dim: usize, resolution: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if resolution == 0 {
            return Err(Error::InvalidDensity("resolution must be at least 1".into()));
        }
        let expected = cell_count(dim, resolution)?;
        if values.len() != expected {
            return Err(Error::InvalidDensity(format!(
                "expected {expected} values for d = {dim}, g = {resolution}, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("cell {i} has value {v}")));
        }
        if !values.iter().any(|&v| v > 0.0) {
            return Err(Error::InvalidDensity("all cell values are zero".into()));
        }
        Ok(Self { dim, resolution, values })
    }

    /// Constant density (already normalized).
    pub fn uniform(dim: usize, resolution: usize) -> Result<Self> {
        let n = cell_count(dim, resolution)?;
        Self::new(dim, resolution, vec![1.0; n])
    }

    /// Normalized radial polynomial-decay density centred on the middle of
    /// the cube: `(1 + (r / core)^2)^(-decay / 2)` evaluated at cell centres.
    pub fn radial_decay(dim: usize, resolution: usize, core: f64, decay: f64) -> Result<Self> {
        if !(core > 0.0) || !decay.is_finite() || decay < 0.0 {
            return Err(Error::InvalidDensity(format!(
                "radial decay needs core > 0 and decay >= 0, got {core}, {decay}"
            )));
        }
        let n = cell_count(dim, resolution)?;
        let g = resolution as f64;
        let mut values = Vec::with_capacity(n);
        let mut idx = vec![0usize; dim];
        for flat in 0..n {
            unflatten(flat, resolution, &mut idx);
            let r2: f64 = idx
                .iter()
                .map(|&i| {
                    let c = (i as f64 + 0.5) / g - 0.5;
                    c * c
                })
                .sum();
            values.push((1.0 + r2 / (core * core)).powf(-decay / 2.0));
        }
        Self::new(dim, resolution, values)?.normalize()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Density value per cell, row-major with the last axis fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_volume(&self) -> f64 {
        (self.resolution as f64).powi(-(self.dim as i32))
    }

    /// Total mass `sum(value) * cell_volume`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Probability mass of every cell.
    pub fn cell_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        self.values.iter().map(|v| v / total).collect()
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-12
    }

    /// Rescales to unit mass.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidDensity(format!("cannot normalize mass {mass}")));
        }
        let values = self.values.iter().map(|v| v / mass).collect();
        Self::new(self.dim, self.resolution, values)
    }

    /// Drawing density `∝ self^(d/(d-1))` whose travelling-salesman curve
    /// converges to `self`.
    pub fn exponent_transform(&self) -> Result<Self> {
        let d = self.check_curve_dim()?;
        self.powf(d / (d - 1.0))
    }

    /// Limit of the arc-length measure of a TSP curve through points drawn
    /// from `self`: `∝ self^((d-1)/d)`.
    pub fn curve_limit_density(&self) -> Result<Self> {
        let d = self.check_curve_dim()?;
        self.powf((d - 1.0) / d)
    }

    fn check_curve_dim(&self) -> Result<f64> {
        if self.dim < 2 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        Ok(self.dim as f64)
    }

    fn powf(&self, exponent: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| v.powf(exponent)).collect();
        Self::new(self.dim, self.resolution, values)?.normalize()
    }

    /// Draws `n` i.i.d. points: cell by inverse CDF over cell masses, then a
    /// uniform position inside the cell. One uniform picks the cell, then
    /// one uniform per axis, in axis order.
    pub fn sample(&self, n: usize, seed: u64) -> PointSet {
        let mut cdf = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        for v in &self.values {
            acc += v;
            cdf.push(acc);
        }
        let total = acc;
        let last_positive = self.values.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        let g = self.resolution as f64;
        let mut rng = rng_from_seed(seed);
        let mut coords = Vec::with_capacity(n * self.dim);
        let mut idx = vec![0usize; self.dim];
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * total;
            let cell = cdf.partition_point(|&c| c <= u).min(last_positive);
            unflatten(cell, self.resolution, &mut idx);
            for &i in &idx {
                let jitter: f64 = rng.gen();
                coords.push(((i as f64 + jitter) / g).min(1.0));
            }
        }
        PointSet { dim: self.dim, coords, seed }
    }
}

/// `g^d`, rejecting overflow.
pub(crate) fn cell_count(dim: usize, resolution: usize) -> Result<usize> {
    u32::try_from(dim)
        .ok()
        .and_then(|d| resolution.checked_pow(d))
        .ok_or_else(|| Error::InvalidDensity(format!("grid {resolution}^{dim} is too large")))
}

/// Multi-index of a flat row-major cell index (last axis fastest).
pub(crate) fn unflatten(mut flat: usize, resolution: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % resolution;
        flat /= resolution;
    }
}

/// Flat index of the grid cell containing `p`, on a grid with `m` cells per
/// axis. Points on an interior face go to the higher cell; the upper
/// boundary of the cube folds into the last cell.
pub(crate) fn cell_of(p: &[f64], m: usize) -> usize {
    let mf = m as f64;
    p.iter().fold(0, |acc, &x| {
        let i = ((x * mf).floor().max(0.0) as usize).min(m - 1);
        acc * m + i
    })
}

/// Points in `[0,1]^d`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    seed: u64,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(x) = coords.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("coordinate {x} outside [0, 1]")));
        }
        Ok(Self { dim, coords, seed })
    }

    pub fn from_points(dim: usize, points: &[&[f64]]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "point of length {} in a {dim}-dimensional set",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords, 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The first `n` points (draws are prefix-stable for a given seed).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self { dim: self.dim, coords: self.coords[..n * self.dim].to_vec(), seed: self.seed }
    }

    /// Points that lie in the closed box `[lo, hi]`, with their original indices.
    pub fn subset_in(&self, lo: &[f64], hi: &[f64]) -> (Self, Vec<usize>) {
        let mut coords = Vec::new();
        let mut kept = Vec::new();
        for (i, p) in self.iter().enumerate() {
            if p.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| *x >= *l && *x <= *h) {
                coords.extend_from_slice(p);
                kept.push(i);
            }
        }
        (Self { dim: self.dim, coords, seed: self.seed }, kept)
    }
}
