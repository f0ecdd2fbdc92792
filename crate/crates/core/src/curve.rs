//! Constant-speed polylines and their arc-length measure on a grid.

use serde::{Deserialize, Serialize};

use crate::density::{cell_count, cell_of, unflatten, DensityGrid, PointSet};
use crate::error::{Error, Result};
use crate::tsp::euclidean;

/// Open polyline through points in visit order.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    dim: usize,
    vertices: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Curve {
    /// Lays the points out in `order` and records prefix arc lengths.
    pub fn parameterize(points: &PointSet, order: &[usize]) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::DegenerateCurve(n));
        }
        crate::tsp::path_length(points, order, &crate::tsp::Metric::Euclidean)?;
        let dim = points.dim();
        let mut vertices = Vec::with_capacity(n * dim);
        for &i in order {
            vertices.extend_from_slice(points.point(i));
        }
        Self::from_vertices(dim, vertices)
    }

    /// Curve through `vertices` (flat, `dim` coordinates per vertex) as given.
    pub fn from_vertices(dim: usize, vertices: Vec<f64>) -> Result<Self> {
        if dim == 0 || !vertices.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!("{} coordinates for dimension {dim}", vertices.len())));
        }
        let n = vertices.len() / dim;
        if n < 2 {
            return Err(Error::DegenerateCurve(n));
        }
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        cumulative.push(acc);
        for w in vertices.chunks_exact(dim).collect::<Vec<_>>().windows(2) {
            acc += euclidean(w[0], w[1]);
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::ZeroLength);
        }
        Ok(Self { dim, vertices, cumulative })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.cumulative.len()
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f64]> {
        self.vertices.chunks_exact(self.dim)
    }

    /// Prefix arc lengths; first entry 0, last entry the total length.
    pub fn cumulative_lengths(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// γ(t): the point at arc length `t * total_length`.
    pub fn point_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("curve parameter {t} outside [0, 1]")));
        }
        let last = self.vertex_count() - 1;
        if t == 1.0 {
            return Ok(self.vertex(last).to_vec());
        }
        let s = t * self.total_length();
        // first segment whose end lies beyond s
        let k = (self.cumulative.partition_point(|&c| c <= s).max(1) - 1).min(last - 1);
        let (s0, s1) = (self.cumulative[k], self.cumulative[k + 1]);
        let frac = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (self.vertex(k), self.vertex(k + 1));
        Ok(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)).collect())
    }

    /// Fraction of arc length inside every cell of the `m^d` partition.
    ///
    /// Each segment is cut at its crossings with the planes `x_k = j/m`; every
    /// piece lies in a single cell, found from its midpoint. A piece running
    /// along a face belongs to the cell above it.
    pub fn empirical_measure(&self, m: usize) -> Result<EmpiricalMeasure> {
        if m == 0 {
            return Err(Error::Domain("partition needs m >= 1".into()));
        }
        let cells = cell_count(self.dim, m)?;
        let mut lengths = vec![0.0; cells];
        let mut cuts = Vec::new();
        let mut mid = vec![0.0; self.dim];
        for k in 0..self.vertex_count() - 1 {
            let (a, b) = (self.vertex(k), self.vertex(k + 1));
            let seg = self.cumulative[k + 1] - self.cumulative[k];
            if seg == 0.0 {
                continue;
            }
            segment_cuts(a, b, m, &mut cuts);
            for w in cuts.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                if t1 <= t0 {
                    continue;
                }
                let tm = 0.5 * (t0 + t1);
                for (slot, (x, y)) in mid.iter_mut().zip(a.iter().zip(b)) {
                    *slot = x + tm * (y - x);
                }
                lengths[cell_of(&mid, m)] += seg * (t1 - t0);
            }
        }
        let total = self.total_length();
        let masses = lengths.into_iter().map(|l| (l / total).clamp(0.0, 1.0)).collect();
        let mut point_counts = vec![0usize; cells];
        for v in self.vertices() {
            point_counts[cell_of(v, m)] += 1;
        }
        Ok(EmpiricalMeasure { partition_m: m, masses, point_counts, total_length: total })
    }
}

/// Sorted parameters in [0, 1] where segment `a → b` crosses an interior
/// grid plane, bracketed by 0 and 1.
pub(crate) fn segment_cuts(a: &[f64], b: &[f64], m: usize, cuts: &mut Vec<f64>) {
    cuts.clear();
    cuts.push(0.0);
    let mf = m as f64;
    for (x, y) in a.iter().zip(b) {
        let delta = y - x;
        if delta == 0.0 {
            continue;
        }
        let (lo, hi) = if delta > 0.0 { (*x, *y) } else { (*y, *x) };
        let first = (lo * mf).floor() as i64 + 1;
        let last = (hi * mf).ceil() as i64 - 1;
        for j in first.max(1)..=last.min(m as i64 - 1) {
            let t = (j as f64 / mf - x) / delta;
            if t > 0.0 && t < 1.0 {
                cuts.push(t);
            }
        }
    }
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
}

/// Arc-length fractions per partition cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    #[serde(rename = "m")]
    pub partition_m: usize,
    pub masses: Vec<f64>,
    /// Curve vertices per cell.
    pub point_counts: Vec<usize>,
    pub total_length: f64,
}

impl EmpiricalMeasure {
    /// Dimension recovered from `masses.len() == m^d` (1 when `m == 1`).
    pub fn dim(&self) -> usize {
        if self.partition_m < 2 {
            return 1;
        }
        let (mut d, mut cells) = (0, 1);
        while cells < self.masses.len() {
            cells *= self.partition_m;
            d += 1;
        }
        d
    }

    /// Block sums onto a coarser partition with `m` cells per axis.
    pub fn coarsen(&self, m: usize) -> Result<Self> {
        let dim = self.dim();
        Ok(Self {
            partition_m: m,
            masses: aggregate(&self.masses, dim, self.partition_m, m)?,
            point_counts: aggregate(&self.point_counts, dim, self.partition_m, m)?,
            total_length: self.total_length,
        })
    }

    /// Vertex counts divided by the number of vertices.
    pub fn point_frequencies(&self) -> Vec<f64> {
        let n: usize = self.point_counts.iter().sum();
        self.point_counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
    }
}

/// Sums a fine grid of `fine^d` cells into `coarse^d` blocks.
fn aggregate<T>(values: &[T], dim: usize, fine: usize, coarse: usize) -> Result<Vec<T>>
where
    T: Copy + Default + std::ops::AddAssign,
{
    if coarse == 0 || !fine.is_multiple_of(coarse) {
        return Err(Error::ResolutionMismatch(format!(
            "grid resolution {fine} is not a multiple of partition {coarse}"
        )));
    }
    let factor = fine / coarse;
    let mut out = vec![T::default(); cell_count(dim, coarse)?];
    let mut idx = vec![0usize; dim];
    for (flat, v) in values.iter().enumerate() {
        unflatten(flat, fine, &mut idx);
        let block = idx.iter().fold(0, |acc, &i| acc * coarse + i / factor);
        out[block] += *v;
    }
    Ok(out)
}

/// Exact probability mass of `density` in each cell of the `m^d` partition.
pub fn cell_masses(density: &DensityGrid, m: usize) -> Result<Vec<f64>> {
    aggregate(&density.cell_probabilities(), density.dim(), density.resolution(), m)
}
