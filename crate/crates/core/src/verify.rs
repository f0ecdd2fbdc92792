//! Experiments that measure how closely the arc-length measure of a
//! travelling-salesman curve follows its intended density.
//!
//! Results for curves longer than the exact-solver cap come from heuristic
//! (nearest neighbour + 2-opt) paths and are empirical observations, not
//! consequences of the limit theorem, which speaks about optimal paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{cell_masses, Curve};
use crate::density::{cell_of, derive_seed, DensityGrid, PointSet};
use crate::error::{Error, Result};
use crate::tsp::{self, exact_path, Metric, Path, Region, DEFAULT_MAX_PASSES, EXACT_CAP};

/// Tolerance for counting a lemma inequality as violated.
pub const LEMMA_TOL: f64 = 1e-9;

/// Label attached to every report built from heuristic paths.
pub const HEURISTIC_LABEL: &str = "nearest-neighbour + 2-opt paths (empirical)";

/// Total variation distance `0.5 * Σ |mu_i - nu_i|` between two mass vectors.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch(format!("mass vectors of length {} and {}", mu.len(), nu.len())));
    }
    for v in [mu, nu] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("mass vector sums to {s}, not 1")));
        }
    }
    let l1: f64 = mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}

/// `T / N^((d-1)/d)` for a path over `points`.
pub fn bhh_ratio(points: &PointSet, path: &Path) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateCurve(n));
    }
    let d = points.dim() as f64;
    Ok(path.length / (n as f64).powf((d - 1.0) / d))
}

/// Euclidean heuristic path from the first point and the curve it traces.
pub fn trajectory(points: &PointSet) -> Result<(Path, Curve)> {
    let path = tsp::heuristic_path(points, &Metric::Euclidean, 0, DEFAULT_MAX_PASSES)?;
    let curve = Curve::parameterize(points, &path.order)?;
    Ok((path, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    #[serde(rename = "N")]
    pub n: usize,
    /// TV between the corrected curve's measure and the target cell masses.
    pub tv_corrected: f64,
    /// Same, for points drawn from the target without correction.
    pub tv_uncorrected: f64,
    /// Length of the corrected curve.
    pub total_length: f64,
    pub bhh_ratio: f64,
    /// TV between corrected-run point frequencies and the drawing density.
    pub point_count_tv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub density: String,
    pub dim: usize,
    pub partition_m: usize,
    pub seed: u64,
    pub paths: String,
    /// TV between the target and the limit the uncorrected curve tends to.
    pub control_limit_tv: f64,
    pub records: Vec<ConvergenceRecord>,
}

impl ConvergenceReport {
    /// One header line plus one row per N.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,tv_corrected,tv_uncorrected,total_length,bhh_ratio,point_count_tv\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.n, r.tv_corrected, r.tv_uncorrected, r.total_length, r.bhh_ratio, r.point_count_tv
            ));
        }
        out
    }
}

/// TV gap between `target` and the normalized `target^((d-1)/d)`, the
/// measure an uncorrected curve converges to.
pub fn control_limit_tv(target: &DensityGrid, m: usize) -> Result<f64> {
    let reference = cell_masses(target, m)?;
    tv_distance(&cell_masses(&target.curve_limit_density()?, m)?, &reference)
}

/// Runs the corrected and the control pipeline at every N.
///
/// N level `k` draws with seed `derive_seed(seed, k)`; the corrected and the
/// control run share it.
pub fn convergence_experiment(target: &DensityGrid, ns: &[usize], m: usize, seed: u64) -> Result<ConvergenceReport> {
    let target = target.normalize()?;
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("N values must be strictly increasing".into()));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(Error::DegenerateCurve(n));
    }
    let reference = cell_masses(&target, m)?;
    let drawing = target.exponent_transform()?;
    let drawing_masses = cell_masses(&drawing, m)?;

    let records = ns
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let level_seed = derive_seed(seed, k as u64);
            let corrected = drawing.sample(n, level_seed);
            let (path, curve) = trajectory(&corrected)?;
            let measure = curve.empirical_measure(m)?;
            let control = target.sample(n, level_seed);
            let (_, control_curve) = trajectory(&control)?;
            let control_measure = control_curve.empirical_measure(m)?;
            Ok(ConvergenceRecord {
                n,
                tv_corrected: tv_distance(&measure.masses, &reference)?,
                tv_uncorrected: tv_distance(&control_measure.masses, &reference)?,
                total_length: path.length,
                bhh_ratio: bhh_ratio(&corrected, &path)?,
                point_count_tv: tv_distance(&measure.point_frequencies(), &drawing_masses)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ConvergenceReport {
        density: format!("grid d={} g={}", target.dim(), target.resolution()),
        dim: target.dim(),
        partition_m: m,
        seed,
        paths: HEURISTIC_LABEL.into(),
        control_limit_tv: control_limit_tv(&target, m)?,
        records,
    })
}

/// Point-frequency TV alone: how far the vertex histogram of `n` draws is
/// from the drawing density's cell masses.
pub fn point_count_tv(drawing: &DensityGrid, n: usize, m: usize, seed: u64) -> Result<f64> {
    let masses = cell_masses(drawing, m)?;
    let points = drawing.sample(n, seed);
    let mut counts = vec![0usize; masses.len()];
    for p in points.iter() {
        counts[cell_of(p, m)] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
    tv_distance(&freq, &masses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhhEstimate {
    pub ns: Vec<usize>,
    /// `T(X_N) / N^((d-1)/d)` per N, from heuristic paths.
    pub ratios: Vec<f64>,
    /// `∫ p^((d-1)/d)`; the limit of the ratios is an unknown constant times this.
    pub limit_integral: f64,
    pub seed: u64,
}

impl BhhEstimate {
    /// Ratios divided by the integral: estimates of the dimension constant.
    pub fn constant_estimates(&self) -> Vec<f64> {
        self.ratios.iter().map(|r| r / self.limit_integral).collect()
    }
}

/// `∫ p^((d-1)/d)` over the cube for a normalized density.
pub fn curve_integral(density: &DensityGrid) -> Result<f64> {
    let d = density.dim() as f64;
    if density.dim() < 2 {
        return Err(Error::UnsupportedDimension(density.dim()));
    }
    let p = density.normalize()?;
    Ok(p.values().iter().map(|v| v.powf((d - 1.0) / d)).sum::<f64>() * p.cell_volume())
}

/// Heuristic-path ratios at every N; level `k` uses `derive_seed(seed, k)`.
pub fn bhh_estimate(density: &DensityGrid, ns: &[usize], seed: u64) -> Result<BhhEstimate> {
    let density = density.normalize()?;
    let ratios = ns
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let points = density.sample(n, derive_seed(seed, k as u64));
            let (path, _) = trajectory(&points)?;
            bhh_ratio(&points, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BhhEstimate { ns: ns.to_vec(), ratios, limit_integral: curve_integral(&density)?, seed })
}

/// Exact quantities of one lemma-suite instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaTrial {
    pub seed: u64,
    /// Optimal Euclidean path length on the unit square.
    pub tsp: f64,
    /// Optimal boundary-quotient path length on the unit square.
    pub boundary_tsp: f64,
    /// Boundary path lengths on the left and right halves.
    pub boundary_halves: [f64; 2],
    /// Optimal path lengths inside each cell of the 2x2 grid.
    pub cell_tsp: Vec<f64>,
    /// Boundary path lengths inside each cell.
    pub cell_boundary_tsp: Vec<f64>,
    /// Length of the optimal square path falling in each cell.
    pub restricted_lengths: Vec<f64>,
}

impl LemmaTrial {
    /// Boundary path is a lower bound on the path: T ≥ T_B.
    pub fn lower_bound_slack(&self) -> f64 {
        self.tsp - self.boundary_tsp
    }

    /// Worst slack of T_{|ω} ≥ T_B(·, ω) across cells.
    pub fn restriction_slack(&self) -> f64 {
        self.restricted_lengths.iter().zip(&self.cell_boundary_tsp).map(|(t, b)| t - b).fold(f64::INFINITY, f64::min)
    }

    /// Superadditivity slack: T_B(square) − (T_B(left) + T_B(right)).
    pub fn superadditivity_slack(&self) -> f64 {
        self.boundary_tsp - self.boundary_halves.iter().sum::<f64>()
    }

    /// |T − T_B| scaled by n^((d-2)/(d-1)), which is 1 in the plane.
    pub fn boundary_gap(&self) -> f64 {
        (self.tsp - self.boundary_tsp).abs()
    }

    /// |T − Σ T(ω_i)|, same scaling.
    pub fn partition_gap(&self) -> f64 {
        (self.tsp - self.cell_tsp.iter().sum::<f64>()).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub n: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub lower_bound_violations: usize,
    pub restriction_violations: usize,
    pub superadditivity_violations: usize,
    pub mean_boundary_gap: f64,
    pub mean_partition_gap: f64,
    pub trials: Vec<LemmaTrial>,
}

/// Exact-solver checks of the boundary-path lemmas on `trials` sets of `n`
/// uniform points in the unit square. Trial `t` uses `derive_seed(seed, t)`.
pub fn lemma_suite(n: usize, trials: usize, seed: u64) -> Result<LemmaReport> {
    if n > EXACT_CAP {
        return Err(Error::InstanceTooLarge { n, cap: EXACT_CAP });
    }
    let uniform = DensityGrid::uniform(2, 1)?;
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, t as u64);
            lemma_trial(&uniform.sample(n, trial_seed), trial_seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let count = |f: &dyn Fn(&LemmaTrial) -> f64| results.iter().filter(|t| f(t) < -LEMMA_TOL).count();
    let mean = |f: &dyn Fn(&LemmaTrial) -> f64| {
        if results.is_empty() {
            0.0
        } else {
            results.iter().map(f).sum::<f64>() / results.len() as f64
        }
    };
    Ok(LemmaReport {
        n,
        seed,
        tolerance: LEMMA_TOL,
        lower_bound_violations: count(&LemmaTrial::lower_bound_slack),
        restriction_violations: count(&LemmaTrial::restriction_slack),
        superadditivity_violations: count(&LemmaTrial::superadditivity_slack),
        mean_boundary_gap: mean(&LemmaTrial::boundary_gap),
        mean_partition_gap: mean(&LemmaTrial::partition_gap),
        trials: results,
    })
}

/// Evaluates every lemma quantity on one planar point set.
pub fn lemma_trial(points: &PointSet, seed: u64) -> Result<LemmaTrial> {
    if points.dim() != 2 {
        return Err(Error::DimensionMismatch("lemma suite runs in the unit square".into()));
    }
    const M: usize = 2;
    let square = Region::unit(2);
    let best = exact_path(points, &Metric::Euclidean)?;
    let boundary_tsp = exact_path(points, &Metric::Boundary(square))?.length;

    let halves = [Region::new(vec![0.0, 0.0], vec![0.5, 1.0])?, Region::new(vec![0.5, 0.0], vec![1.0, 1.0])?];
    let mut boundary_halves = [0.0; 2];
    for (side, region) in halves.into_iter().enumerate() {
        let subset = select(points, |p| usize::from(p[0] >= 0.5) == side);
        boundary_halves[side] = exact_len(&subset, &Metric::Boundary(region))?;
    }

    let cells = M * M;
    let mut cell_tsp = Vec::with_capacity(cells);
    let mut cell_boundary_tsp = Vec::with_capacity(cells);
    for i in 0..cells {
        let subset = select(points, |p| cell_of(p, M) == i);
        cell_tsp.push(exact_len(&subset, &Metric::Euclidean)?);
        cell_boundary_tsp.push(exact_len(&subset, &Metric::Boundary(Region::grid_cell(2, M, i)))?);
    }

    let restricted_lengths = match Curve::parameterize(points, &best.order) {
        Ok(curve) => {
            let total = curve.total_length();
            curve.empirical_measure(M)?.masses.iter().map(|w| w * total).collect()
        }
        Err(Error::DegenerateCurve(_)) | Err(Error::ZeroLength) => vec![0.0; cells],
        Err(e) => return Err(e),
    };

    Ok(LemmaTrial {
        seed,
        tsp: best.length,
        boundary_tsp,
        boundary_halves,
        cell_tsp,
        cell_boundary_tsp,
        restricted_lengths,
    })
}

fn select(points: &PointSet, keep: impl Fn(&[f64]) -> bool) -> PointSet {
    let coords: Vec<f64> = points.iter().filter(|p| keep(p)).flatten().copied().collect();
    PointSet::new(points.dim(), coords, points.seed()).expect("subset of a valid point set")
}

fn exact_len(points: &PointSet, metric: &Metric) -> Result<f64> {
    Ok(exact_path(points, metric)?.length)
}
