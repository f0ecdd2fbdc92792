//! Short Hamiltonian paths over point sets.
//!
//! All paths are open (no closing edge). Two metrics are supported: the
//! Euclidean one and the boundary-quotient metric of a box, where the whole
//! boundary of the box is collapsed to a single point so that
//! `d(a, b) = min(|a - b|, dist(a, ∂R) + dist(b, ∂R))`.

use serde::{Deserialize, Serialize};

use crate::density::PointSet;
use crate::error::{Error, Result};
use crate::spatial::KdTree;

/// Largest instance accepted by [`exact_path`].
pub const EXACT_CAP: usize = 13;

/// Segment reversals must shorten the path by more than this to be applied.
pub const TWO_OPT_EPS: f64 = 1e-12;

/// Default pass budget for [`two_opt`].
/// Below this size the plain quadratic scans are faster than the kd-tree.
const SPATIAL_MIN: usize = 64;

pub const DEFAULT_MAX_PASSES: usize = 1000;

/// Axis-aligned box `[lo, hi]` inside the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch(format!("region corners of length {} and {}", lo.len(), hi.len())));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(0.0 <= *l && l < h && *h <= 1.0) {
                return Err(Error::Domain(format!("invalid region side [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    /// Cell `index` (row-major, last axis fastest) of the `m^d` grid partition.
    pub fn grid_cell(dim: usize, m: usize, index: usize) -> Self {
        let mut idx = vec![0usize; dim];
        crate::density::unflatten(index, m, &mut idx);
        let mf = m as f64;
        Self {
            lo: idx.iter().map(|&i| i as f64 / mf).collect(),
            hi: idx.iter().map(|&i| (i + 1) as f64 / mf).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    /// Distance from an interior point to the nearest face.
    fn depth(&self, p: &[f64]) -> f64 {
        p.iter().zip(self.lo.iter().zip(&self.hi)).map(|(x, (l, h))| (x - l).min(h - x)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Boundary(Region),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Boundary(_) => "boundary",
        }
    }

    /// Distance without the containment check of [`boundary_distance`].
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let direct = euclidean(a, b);
        match self {
            Metric::Euclidean => direct,
            Metric::Boundary(r) => direct.min(r.depth(a) + r.depth(b)),
        }
    }

    fn check_points(&self, points: &PointSet) -> Result<()> {
        if let Metric::Boundary(r) = self {
            if r.dim() != points.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{}-dimensional region for {}-dimensional points",
                    r.dim(),
                    points.dim()
                )));
            }
            if let Some(p) = points.iter().find(|p| !r.contains(p)) {
                return Err(Error::Domain(format!("point {p:?} outside region")));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Quotient distance of `a` and `b` after collapsing the boundary of `r`.
pub fn boundary_distance(a: &[f64], b: &[f64], r: &Region) -> Result<f64> {
    for p in [a, b] {
        if !r.contains(p) {
            return Err(Error::Domain(format!("point {p:?} outside region")));
        }
    }
    Ok(euclidean(a, b).min(r.depth(a) + r.depth(b)))
}

/// A visit order over a point set together with its length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub order: Vec<usize>,
    pub length: f64,
    pub metric: Metric,
}

impl Path {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidOrder(format!("{} indices for {n} points", order.len())));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidOrder(format!("index {i} out of range or repeated")));
        }
    }
    Ok(())
}

fn order_length(points: &PointSet, order: &[usize], metric: &Metric) -> f64 {
    order.windows(2).map(|w| metric.distance(points.point(w[0]), points.point(w[1]))).sum()
}

/// Sum of metric distances along consecutive visits.
pub fn path_length(points: &PointSet, order: &[usize], metric: &Metric) -> Result<f64> {
    check_permutation(order, points.len())?;
    metric.check_points(points)?;
    Ok(order_length(points, order, metric))
}

/// Greedy path from `start`, always moving to the closest unvisited point
/// (lowest index on ties).
pub fn nearest_neighbor(points: &PointSet, metric: &Metric, start: usize) -> Result<Path> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput("nearest-neighbour path over no points"));
    }
    if start >= n {
        return Err(Error::InvalidOrder(format!("start {start} with {n} points")));
    }
    metric.check_points(points)?;
    if matches!(metric, Metric::Euclidean) && n >= SPATIAL_MIN {
        let mut tree = KdTree::new(points.dim(), points.coords());
        let mut order = Vec::with_capacity(n);
        let mut current = start;
        tree.remove(current);
        order.push(current);
        while let Some(next) = tree.nearest_live(points.point(current)) {
            tree.remove(next);
            order.push(next);
            current = next;
        }
        let length = order_length(points, &order, metric);
        return Ok(Path { order, length, metric: metric.clone() });
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    visited[current] = true;
    order.push(current);
    for _ in 1..n {
        let here = points.point(current);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, seen) in visited.iter().enumerate() {
            if *seen {
                continue;
            }
            let d = metric.distance(here, points.point(j));
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        visited[best] = true;
        order.push(best);
        current = best;
    }
    let length = order_length(points, &order, metric);
    Ok(Path { order, length, metric: metric.clone() })
}

/// First-improvement 2-opt for open paths.
///
/// Every sub-segment `order[i..=j]` is a candidate for reversal, prefixes
/// and suffixes included, so the endpoints may move. A pass scans `(i, j)`
/// lexicographically and applies each improving reversal as soon as it is
/// found. Stops after a pass with no improvement or after `max_passes`.
pub fn two_opt(points: &PointSet, path: &Path, max_passes: usize) -> Result<Path> {
    check_permutation(&path.order, points.len())?;
    path.metric.check_points(points)?;
    let mut order = path.order.clone();
    match &path.metric {
        Metric::Euclidean if points.len() >= SPATIAL_MIN => {
            two_opt_spatial(&mut order, max_passes, points);
        }
        Metric::Euclidean if points.dim() == 2 => {
            let xy: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            two_opt_scan(&mut order, max_passes, |a, b| {
                let (p, q) = (xy[a], xy[b]);
                ((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1])).sqrt()
            });
        }
        metric => {
            two_opt_scan(&mut order, max_passes, |a, b| metric.distance(points.point(a), points.point(b)));
        }
    }
    let length = order_length(points, &order, &path.metric);
    let original = order_length(points, &path.order, &path.metric);
    // summation rounding must not make the output longer than the input
    if length > original {
        return Ok(Path { order: path.order.clone(), length: original, metric: path.metric.clone() });
    }
    Ok(Path { order, length, metric: path.metric.clone() })
}

fn two_opt_scan(order: &mut [usize], max_passes: usize, dist: impl Fn(usize, usize) -> f64) {
    let n = order.len();
    if n < 3 {
        return;
    }
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (order[i], order[j]);
                let mut delta = 0.0;
                if i > 0 {
                    let prev = order[i - 1];
                    delta += dist(prev, b) - dist(prev, a);
                }
                if j + 1 < n {
                    let next = order[j + 1];
                    delta += dist(a, next) - dist(b, next);
                }
                if delta < -TWO_OPT_EPS {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Same move sequence as [`two_opt_scan`] under the Euclidean metric.
///
/// A reversal of `order[i..=j]` can only pay off if `order[j]` is closer to
/// `order[i-1]` than `order[i]` is, or if `order[j+1]` is closer to
/// `order[i]` than to its own predecessor. Both candidate sets come from the
/// kd-tree (the second through per-point radii equal to the longest incident
/// edge), and are then tested in increasing `j` with the exact delta.
fn two_opt_spatial(order: &mut [usize], max_passes: usize, points: &PointSet) {
    let n = order.len();
    if n < 3 {
        return;
    }
    let dist = |a: usize, b: usize| euclidean(points.point(a), points.point(b));
    let mut pos = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    let incident = |order: &[usize], k: usize| {
        let mut r: f64 = 0.0;
        if k > 0 {
            r = r.max(dist(order[k - 1], order[k]));
        }
        if k + 1 < n {
            r = r.max(dist(order[k], order[k + 1]));
        }
        r
    };
    let mut tree = KdTree::new(points.dim(), points.coords());
    tree.set_radii(|v| incident(order, pos[v]));
    let mut cands = Vec::new();
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut improved = false;
        for i in 0..n - 1 {
            let mut from = i + 1;
            while from < n {
                let a = order[i];
                cands.clear();
                if i > 0 {
                    let prev = order[i - 1];
                    tree.within(points.point(prev), dist(prev, a), |v| cands.push(pos[v]));
                }
                tree.reaching(points.point(a), |v| {
                    if pos[v] > 0 {
                        cands.push(pos[v] - 1)
                    }
                });
                cands.retain(|&j| j >= from && !(i == 0 && j == n - 1));
                cands.sort_unstable();
                cands.dedup();
                let hit = cands.iter().copied().find(|&j| {
                    let b = order[j];
                    let mut delta = 0.0;
                    if i > 0 {
                        let prev = order[i - 1];
                        delta += dist(prev, b) - dist(prev, a);
                    }
                    if j + 1 < n {
                        let next = order[j + 1];
                        delta += dist(a, next) - dist(b, next);
                    }
                    delta < -TWO_OPT_EPS
                });
                let Some(j) = hit else { break };
                order[i..=j].reverse();
                for k in i..=j {
                    pos[order[k]] = k;
                }
                for k in [i.wrapping_sub(1), i, j, j + 1] {
                    if k < n {
                        tree.set_radius(order[k], incident(order, k));
                    }
                }
                improved = true;
                from = j + 1;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Nearest neighbour from `start` followed by 2-opt.
pub fn heuristic_path(points: &PointSet, metric: &Metric, start: usize, max_passes: usize) -> Result<Path> {
    let nn = nearest_neighbor(points, metric, start)?;
    two_opt(points, &nn, max_passes)
}

/// Globally shortest open Hamiltonian path (Held–Karp over subsets with a
/// free starting point). Limited to [`EXACT_CAP`] points; an empty set gives
/// an empty path of length 0.
pub fn exact_path(points: &PointSet, metric: &Metric) -> Result<Path> {
    let n = points.len();
    if n > EXACT_CAP {
        return Err(Error::InstanceTooLarge { n, cap: EXACT_CAP });
    }
    metric.check_points(points)?;
    if n <= 1 {
        return Ok(Path { order: (0..n).collect(), length: 0.0, metric: metric.clone() });
    }
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            dist[a * n + b] = metric.distance(points.point(a), points.point(b));
        }
    }
    let full = 1usize << n;
    let mut best = vec![f64::INFINITY; full * n];
    let mut parent = vec![usize::MAX; full * n];
    for j in 0..n {
        best[(1 << j) * n + j] = 0.0;
    }
    for mask in 1..full {
        for last in 0..n {
            let here = best[mask * n + last];
            if mask & (1 << last) == 0 || here == f64::INFINITY {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let grown = mask | (1 << next);
                let cand = here + dist[last * n + next];
                if cand < best[grown * n + next] {
                    best[grown * n + next] = cand;
                    parent[grown * n + next] = last;
                }
            }
        }
    }
    let done = full - 1;
    let (mut last, _) =
        (0..n)
            .map(|j| (j, best[done * n + j]))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    let mut order = Vec::with_capacity(n);
    let mut mask = done;
    while last != usize::MAX {
        order.push(last);
        let prev = parent[mask * n + last];
        mask &= !(1 << last);
        last = prev;
    }
    order.reverse();
    let length = order_length(points, &order, metric);
    Ok(Path { order, length, metric: metric.clone() })
}
