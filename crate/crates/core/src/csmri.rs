//! Compressed-sensing MRI harness.
//!
//! Images are sampled in the 2D Fourier plane through a binary k-space mask
//! and reconstructed by ℓ1 minimization over orthonormal Haar coefficients:
//!
//! ```text
//! minimize  λ‖α‖₁ + ½‖M F W⁻¹ α − y‖²
//! ```
//!
//! with `F` the unitary 2D DFT, `W` the separable Haar transform and `M`
//! the mask projection. The operator has unit norm, so the accelerated
//! proximal gradient iteration runs with step 1.
//!
//! Masks use centred indexing: cell `(r, c)` holds frequency
//! `(r - n/2, c - n/2)`, so DC sits at `(n/2, n/2)`. A point `x ∈ [0,1]²`
//! of a trajectory falls in cell `(floor(x0 n), floor(x1 n))`, the same
//! row-major layout as a [`DensityGrid`] of resolution `n`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::curve::{segment_cuts, Curve};
use crate::density::{cell_of, derive_seed, rng_from_seed, DensityGrid};
use crate::error::{Error, Result};
use crate::verify::trajectory;

/// PSNR reported for (numerically) identical images.
pub const PSNR_CAP_DB: f64 = 200.0;

/// Relative tolerance on the sampled cell count when calibrating a trajectory mask.
pub const BUDGET_TOLERANCE: f64 = 0.02;

/// Evaluation budget of the calibration search.
pub const MAX_CALIBRATION_STEPS: usize = 30;

fn check_side(side: usize) -> Result<()> {
    if side < 2 || !side.is_power_of_two() {
        return Err(Error::InvalidInput(format!("side {side} is not a power of two >= 2")));
    }
    Ok(())
}

/// Square real image, row-major, nominal range [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        check_side(side)?;
        if pixels.len() != side * side {
            return Err(Error::DimensionMismatch(format!("{} pixels for a {side}x{side} image", pixels.len())));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel".into()));
        }
        Ok(Self { side, pixels })
    }

    pub fn zeros(side: usize) -> Result<Self> {
        Self::new(side, vec![0.0; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Deterministic test phantom: nested ellipses, a bar, a few small
    /// discs and a smooth bump, all inside [0, 1].
    pub fn phantom(side: usize) -> Result<Self> {
        check_side(side)?;
        let n = side as f64;
        // (centre row, centre col, radius row, radius col, value added)
        let ellipses = [
            (0.50, 0.50, 0.44, 0.36, 0.70),
            (0.50, 0.50, 0.40, 0.32, -0.45),
            (0.42, 0.38, 0.12, 0.07, 0.35),
            (0.42, 0.62, 0.14, 0.06, 0.25),
            (0.70, 0.50, 0.05, 0.05, 0.45),
            (0.74, 0.40, 0.025, 0.025, 0.40),
            (0.74, 0.60, 0.02, 0.035, 0.40),
        ];
        let mut pixels = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let (y, x) = ((r as f64 + 0.5) / n, (c as f64 + 0.5) / n);
                let mut v = 0.0;
                for (cy, cx, ry, rx, val) in ellipses {
                    if ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0 {
                        v += val;
                    }
                }
                if (0.22..0.27).contains(&y) && (0.40..0.60).contains(&x) {
                    v += 0.3;
                }
                v += 0.2 * (-((y - 0.58).powi(2) + (x - 0.52).powi(2)) / (2.0 * 0.06f64.powi(2))).exp();
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        Self::new(side, pixels)
    }

    /// Image with exactly `k` nonzero Haar coefficients (`levels` levels):
    /// the whole approximation band at mean intensity 0.5 plus random
    /// detail coefficients.
    pub fn haar_sparse(side: usize, k: usize, levels: usize, seed: u64) -> Result<Self> {
        check_side(side)?;
        check_levels(side, levels)?;
        let total = side * side;
        let coarse = side >> levels;
        if k < coarse * coarse || k > total {
            return Err(Error::InvalidInput(format!(
                "need between {} and {total} coefficients, got {k}",
                coarse * coarse
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut coefs = vec![0.0; total];
        let approx = 0.5 * (1usize << levels) as f64;
        for r in 0..coarse {
            for c in 0..coarse {
                coefs[r * side + c] = approx;
            }
        }
        let mut placed = coarse * coarse;
        while placed < k {
            let i = rng.gen_range(0..total);
            if coefs[i] == 0.0 {
                let magnitude = rng.gen_range(0.2..1.0);
                coefs[i] = if rng.gen::<bool>() { magnitude } else { -magnitude };
                placed += 1;
            }
        }
        haar_inverse(&mut coefs, side, levels)?;
        Self::new(side, coefs)
    }
}

/// Binary k-space sampling set with centred indexing.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceMask {
    side: usize,
    cells: Vec<bool>,
}

impl KSpaceMask {
    /// Wraps a cell vector; the DC cell is switched on.
    pub fn new(side: usize, mut cells: Vec<bool>) -> Result<Self> {
        check_side(side)?;
        if cells.len() != side * side {
            return Err(Error::DimensionMismatch(format!("{} cells for side {side}", cells.len())));
        }
        cells[Self::dc_index(side)] = true;
        Ok(Self { side, cells })
    }

    pub fn full(side: usize) -> Result<Self> {
        Self::new(side, vec![true; side * side])
    }

    /// Flat index of the DC cell `(n/2, n/2)`.
    pub fn dc_index(side: usize) -> usize {
        (side / 2) * side + side / 2
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_marked(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.side + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.count() as f64 / self.cells.len() as f64
    }

    /// FFT-order bin of every marked cell, in row-major mask order.
    fn fft_bins(&self) -> Vec<usize> {
        let n = self.side;
        let h = n / 2;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| ((i / n + h) % n) * n + (i % n + h) % n)
            .collect()
    }
}

/// Marks every cell the curve passes through, endpoints and touched
/// corners included, plus DC.
pub fn rasterize(curve: &Curve, side: usize) -> Result<KSpaceMask> {
    check_side(side)?;
    if curve.dim() != 2 {
        return Err(Error::DimensionMismatch("k-space trajectories are planar".into()));
    }
    let mut cells = vec![false; side * side];
    let mut cuts = Vec::new();
    let mut p = [0.0; 2];
    let at = |a: &[f64], b: &[f64], t: f64, p: &mut [f64; 2]| {
        for k in 0..2 {
            p[k] = a[k] + t * (b[k] - a[k]);
        }
    };
    let verts: Vec<&[f64]> = curve.vertices().collect();
    cells[cell_of(verts[0], side)] = true;
    for w in verts.windows(2) {
        let (a, b) = (w[0], w[1]);
        segment_cuts(a, b, side, &mut cuts);
        for (k, &t) in cuts.iter().enumerate() {
            at(a, b, t, &mut p);
            cells[cell_of(&p, side)] = true;
            if let Some(&next) = cuts.get(k + 1) {
                at(a, b, 0.5 * (t + next), &mut p);
                cells[cell_of(&p, side)] = true;
            }
        }
    }
    KSpaceMask::new(side, cells)
}

/// `budget` distinct cells drawn from `target` one at a time, repeats
/// discarded, DC always first.
///
/// Sequential draws that discard repeats are sampling without replacement
/// proportional to the weights; this is realized exactly by keeping the
/// `budget - 1` largest keys `ln(u) / w` (Efraimidis–Spirakis).
pub fn iid_mask(target: &DensityGrid, budget: usize, seed: u64) -> Result<KSpaceMask> {
    let side = target.resolution();
    check_side(side)?;
    if target.dim() != 2 {
        return Err(Error::DimensionMismatch("k-space densities are planar".into()));
    }
    let total = side * side;
    if budget == 0 || budget > total {
        return Err(Error::Infeasible(format!("budget {budget} outside 1..={total}")));
    }
    let dc = KSpaceMask::dc_index(side);
    let support = target.values().iter().enumerate().filter(|(i, &v)| v > 0.0 && *i != dc).count();
    if support + 1 < budget {
        return Err(Error::Infeasible(format!("density supports only {} cells, budget is {budget}", support + 1)));
    }
    let mut rng = rng_from_seed(seed);
    let mut keyed: Vec<(f64, usize)> = target
        .values()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.gen::<f64>();
            let key = if w > 0.0 && i != dc { (1.0 - u).ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cells = vec![false; total];
    for &(_, i) in keyed.iter().take(budget - 1) {
        cells[i] = true;
    }
    KSpaceMask::new(side, cells)
}

/// Unitary 2D DFT on `n x n` complex buffers.
#[derive(Clone)]
pub struct Fourier2 {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fourier2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { side, forward: planner.plan_fft_forward(side), inverse: planner.plan_fft_inverse(side) }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &*self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &*self.inverse);
    }

    fn apply(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.side;
        debug_assert_eq!(data.len(), n * n);
        // rustfft processes every length-n chunk of the buffer
        fft.process(data);
        transpose(data, n);
        fft.process(data);
        transpose(data, n);
        let scale = 1.0 / n as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

fn transpose<T: Copy>(data: &mut [T], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

fn check_levels(side: usize, levels: usize) -> Result<()> {
    if levels > side.trailing_zeros() as usize {
        return Err(Error::InvalidInput(format!("{levels} Haar levels on a side of {side}")));
    }
    Ok(())
}

/// Orthonormal separable Haar analysis in place (Mallat layout).
pub fn haar_forward(data: &mut [f64], side: usize, levels: usize) -> Result<()> {
    check_levels(side, levels)?;
    let mut buf = vec![0.0; side];
    for level in 0..levels {
        let len = side >> level;
        for r in 0..len {
            haar_step(&mut data[r * side..r * side + len], &mut buf[..len]);
        }
        for c in 0..len {
            haar_step_strided(data, c, side, len, &mut buf[..len], true);
        }
    }
    Ok(())
}

/// Inverse of [`haar_forward`].
pub fn haar_inverse(data: &mut [f64], side: usize, levels: usize) -> Result<()> {
    check_levels(side, levels)?;
    let mut buf = vec![0.0; side];
    for level in (0..levels).rev() {
        let len = side >> level;
        for c in 0..len {
            haar_step_strided(data, c, side, len, &mut buf[..len], false);
        }
        for r in 0..len {
            haar_unstep(&mut data[r * side..r * side + len], &mut buf[..len]);
        }
    }
    Ok(())
}

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_step(x: &mut [f64], buf: &mut [f64]) {
    let h = x.len() / 2;
    for k in 0..h {
        buf[k] = (x[2 * k] + x[2 * k + 1]) * SQRT_HALF;
        buf[h + k] = (x[2 * k] - x[2 * k + 1]) * SQRT_HALF;
    }
    x.copy_from_slice(buf);
}

fn haar_unstep(x: &mut [f64], buf: &mut [f64]) {
    let h = x.len() / 2;
    for k in 0..h {
        buf[2 * k] = (x[k] + x[h + k]) * SQRT_HALF;
        buf[2 * k + 1] = (x[k] - x[h + k]) * SQRT_HALF;
    }
    x.copy_from_slice(buf);
}

fn haar_step_strided(data: &mut [f64], col: usize, side: usize, len: usize, buf: &mut [f64], forward: bool) {
    let mut column: Vec<f64> = (0..len).map(|r| data[r * side + col]).collect();
    if forward {
        haar_step(&mut column, buf);
    } else {
        haar_unstep(&mut column, buf);
    }
    for (r, v) in column.into_iter().enumerate() {
        data[r * side + col] = v;
    }
}

/// Masked Fourier measurement of Haar coefficients: `A = M F W⁻¹`.
#[derive(Clone)]
pub struct SensingOperator {
    side: usize,
    levels: usize,
    bins: Vec<usize>,
    fourier: Fourier2,
}

impl SensingOperator {
    pub fn new(mask: &KSpaceMask, levels: usize) -> Result<Self> {
        check_levels(mask.side(), levels)?;
        Ok(Self { side: mask.side(), levels, bins: mask.fft_bins(), fourier: Fourier2::new(mask.side()) })
    }

    pub fn measurement_count(&self) -> usize {
        self.bins.len()
    }

    /// Packed measurements of an image (no wavelet synthesis).
    pub fn sample_image(&self, pixels: &[f64]) -> Vec<Complex64> {
        let mut spectrum: Vec<Complex64> = pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
        self.fourier.forward(&mut spectrum);
        self.bins.iter().map(|&b| spectrum[b]).collect()
    }

    /// `A α`.
    pub fn apply(&self, coefs: &[f64]) -> Vec<Complex64> {
        let mut image = coefs.to_vec();
        haar_inverse(&mut image, self.side, self.levels).expect("levels checked");
        self.sample_image(&image)
    }

    /// `Aᵀ y` for the real inner product `Re⟨·,·⟩`.
    pub fn adjoint(&self, measurements: &[Complex64]) -> Vec<f64> {
        let mut spectrum = vec![Complex64::new(0.0, 0.0); self.side * self.side];
        for (&b, &v) in self.bins.iter().zip(measurements) {
            spectrum[b] = v;
        }
        self.fourier.inverse(&mut spectrum);
        let mut coefs: Vec<f64> = spectrum.iter().map(|v| v.re).collect();
        haar_forward(&mut coefs, self.side, self.levels).expect("levels checked");
        coefs
    }
}

/// Masked orthonormal 2D DFT coefficients of `image`, row-major over the mask.
pub fn measure(image: &Image, mask: &KSpaceMask) -> Result<Vec<Complex64>> {
    if image.side() != mask.side() {
        return Err(Error::DimensionMismatch(format!("image side {} and mask side {}", image.side(), mask.side())));
    }
    Ok(SensingOperator::new(mask, 0)?.sample_image(image.pixels()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when `‖α_k+1 − α_k‖ / ‖α_k+1‖` falls below this.
    pub tolerance: f64,
    pub wavelet_levels: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, max_iters: 300, tolerance: 1e-6, wavelet_levels: 4 }
    }
}

impl ReconConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda {} must be positive", self.lambda)));
        }
        if self.max_iters == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("need max_iters >= 1 and tolerance > 0".into()));
        }
        Ok(())
    }
}

/// Result of [`reconstruct_traced`].
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: Image,
    /// Objective after every iteration; nonincreasing.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// ℓ1-Haar reconstruction from packed measurements.
pub fn reconstruct(y: &[Complex64], mask: &KSpaceMask, cfg: &ReconConfig) -> Result<Image> {
    Ok(reconstruct_traced(y, mask, cfg)?.image)
}

/// Accelerated proximal gradient with step 1 and monotone restart: when a
/// momentum step would raise the objective, momentum is reset and a plain
/// proximal step is taken from the last iterate instead.
pub fn reconstruct_traced(y: &[Complex64], mask: &KSpaceMask, cfg: &ReconConfig) -> Result<Reconstruction> {
    cfg.validate()?;
    let op = SensingOperator::new(mask, cfg.wavelet_levels)?;
    if y.len() != op.measurement_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} measurements for a mask with {} cells",
            y.len(),
            op.measurement_count()
        )));
    }
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite measurement".into()));
    }
    let lambda = cfg.lambda;
    let objective = |coefs: &[f64]| -> f64 {
        let residual: f64 = op.apply(coefs).iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
        lambda * coefs.iter().map(|c| c.abs()).sum::<f64>() + 0.5 * residual
    };
    let prox_step = |from: &[f64]| -> Vec<f64> {
        let residual: Vec<Complex64> = op.apply(from).iter().zip(y).map(|(a, b)| a - b).collect();
        let grad = op.adjoint(&residual);
        from.iter().zip(&grad).map(|(x, g)| soft_threshold(x - g, lambda)).collect()
    };

    let size = mask.side() * mask.side();
    let mut x = vec![0.0; size];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut current = objective(&x);
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut next = prox_step(&z);
        let mut value = objective(&next);
        if value > current {
            t = 1.0;
            next = prox_step(&x);
            value = objective(&next);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let mut change = 0.0;
        let mut norm = 0.0;
        for ((zi, xi), ni) in z.iter_mut().zip(&x).zip(&next) {
            let d = ni - xi;
            change += d * d;
            norm += ni * ni;
            *zi = ni + momentum * d;
        }
        x = next;
        t = t_next;
        // the plain proximal step cannot increase the objective; guard rounding
        current = value.min(current);
        trace.push(current);
        if change.sqrt() <= cfg.tolerance * norm.sqrt().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    haar_inverse(&mut x, mask.side(), cfg.wavelet_levels)?;
    Ok(Reconstruction { image: Image::new(mask.side(), x)?, objective: trace, iterations, converged })
}

#[inline]
fn soft_threshold(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

/// `10 log10(1 / MSE)` with peak 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &Image, candidate: &Image) -> Result<f64> {
    if reference.side() != candidate.side() {
        return Err(Error::DimensionMismatch(format!("images of side {} and {}", reference.side(), candidate.side())));
    }
    let mse = reference.pixels().iter().zip(candidate.pixels()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        / reference.pixels().len() as f64;
    if mse < 1e-20 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Settings of [`scheme_comparison`] other than the image and density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub max_iters: usize,
    pub tolerance: f64,
    pub wavelet_levels: usize,
    /// λ = `lambda_rel * ‖Aᵀy‖∞ * scale`.
    pub lambda_rel: f64,
    /// Scales reported; the headline PSNR uses scale 1.
    pub lambda_scales: Vec<f64>,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tolerance: 1e-6,
            wavelet_levels: 4,
            lambda_rel: 1e-3,
            lambda_scales: vec![0.1, 1.0, 10.0],
        }
    }
}

/// Which sampling scheme a mask came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Independent cells drawn from the target.
    IndependentTarget,
    /// TSP trajectory through points drawn from the target.
    TrajectoryTarget,
    /// TSP trajectory through points drawn from the exponent-corrected target.
    TrajectoryCorrected,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::IndependentTarget, Scheme::TrajectoryTarget, Scheme::TrajectoryCorrected];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::IndependentTarget => "A_iid_target",
            Scheme::TrajectoryTarget => "B_tsp_target",
            Scheme::TrajectoryCorrected => "C_tsp_corrected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaResult {
    pub lambda: f64,
    pub psnr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub psnr_db: f64,
    pub sampled_fraction: f64,
    /// Drawn cells for the independent scheme, trajectory points otherwise.
    pub n_points: usize,
    pub lambda: f64,
    pub lambda_grid: Vec<LambdaResult>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub side: usize,
    pub acceleration: f64,
    pub budget: usize,
    pub seed: u64,
    pub rasterization: String,
    #[serde(rename = "A_iid_target")]
    pub independent_target: SchemeResult,
    #[serde(rename = "B_tsp_target")]
    pub trajectory_target: SchemeResult,
    #[serde(rename = "C_tsp_corrected")]
    pub trajectory_corrected: SchemeResult,
}

/// Comparison output plus the artifacts behind it.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub report: ComparisonReport,
    /// Masks in [`Scheme::ALL`] order.
    pub masks: Vec<KSpaceMask>,
    /// Reconstructions at λ scale 1, in [`Scheme::ALL`] order.
    pub reconstructions: Vec<Image>,
}

/// Number of cells a budget of `1/r` of the plane amounts to.
pub fn budget_for(side: usize, acceleration: f64) -> Result<usize> {
    if !(acceleration > 1.0) || !acceleration.is_finite() {
        return Err(Error::InvalidInput(format!("acceleration {acceleration} must exceed 1")));
    }
    Ok(((side * side) as f64 / acceleration).round().max(1.0) as usize)
}

/// Trajectory mask through `n` points drawn from `drawing`.
pub fn trajectory_mask(drawing: &DensityGrid, n: usize, side: usize, seed: u64) -> Result<KSpaceMask> {
    let points = drawing.sample(n.max(2), seed);
    let (_, curve) = trajectory(&points)?;
    rasterize(&curve, side)
}

/// Searches the number of drawn points whose trajectory mask hits `budget`
/// cells within [`BUDGET_TOLERANCE`]. Draws with a fixed seed are
/// prefix-stable, so the mask grows nearly monotonically with the count.
pub fn calibrate_trajectory_mask(drawing: &DensityGrid, budget: usize, seed: u64) -> Result<(usize, KSpaceMask)> {
    let side = drawing.resolution();
    let slack = (BUDGET_TOLERANCE * budget as f64).floor() as usize;
    let within = |count: usize| count.abs_diff(budget) <= slack;
    let mut steps = 0;
    let mut eval = |n: usize| -> Result<KSpaceMask> {
        steps += 1;
        if steps > MAX_CALIBRATION_STEPS {
            return Err(Error::Calibration(format!(
                "no point count reached {budget} cells within {MAX_CALIBRATION_STEPS} steps"
            )));
        }
        trajectory_mask(drawing, n, side, seed)
    };

    // bracket: lo undershoots, hi overshoots
    let mut lo = 2usize;
    let mut hi = (budget / 4).max(4);
    loop {
        let mask = eval(hi)?;
        let count = mask.count();
        if within(count) {
            return Ok((hi, mask));
        }
        if count > budget {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let mask = eval(mid)?;
        let count = mask.count();
        if within(count) {
            return Ok((mid, mask));
        }
        if count > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Calibration(format!("mask size jumps across {budget} between {lo} and {hi} points")))
}

/// Builds the three masks at matched budget `round(n²/r)`, reconstructs
/// the image from each and reports PSNRs.
///
/// Scheme `k` of [`Scheme::ALL`] draws with `derive_seed(seed, k)`.
pub fn scheme_comparison(
    image: &Image,
    target: &DensityGrid,
    acceleration: f64,
    seed: u64,
    cfg: &ComparisonConfig,
) -> Result<Comparison> {
    let side = image.side();
    if target.dim() != 2 || target.resolution() != side {
        return Err(Error::ResolutionMismatch(format!(
            "density d = {}, g = {} for a {side}x{side} image",
            target.dim(),
            target.resolution()
        )));
    }
    let target = target.normalize()?;
    let budget = budget_for(side, acceleration)?;
    let corrected = target.exponent_transform()?;

    let build = |k: usize| -> Result<(usize, KSpaceMask)> {
        let s = derive_seed(seed, k as u64);
        match Scheme::ALL[k] {
            Scheme::IndependentTarget => Ok((budget, iid_mask(&target, budget, s)?)),
            Scheme::TrajectoryTarget => calibrate_trajectory_mask(&target, budget, s),
            Scheme::TrajectoryCorrected => calibrate_trajectory_mask(&corrected, budget, s),
        }
    };
    let built = (0..3).into_par_iter().map(build).collect::<Result<Vec<_>>>()?;

    let results = built
        .par_iter()
        .enumerate()
        .map(|(k, (n_points, mask))| evaluate_mask(image, mask, *n_points, derive_seed(seed, k as u64), cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut results = results.into_iter();
    let mut take = || results.next().expect("three schemes");
    let (ra, ia) = take();
    let (rb, ib) = take();
    let (rc, ic) = take();
    Ok(Comparison {
        report: ComparisonReport {
            side,
            acceleration,
            budget,
            seed,
            rasterization: "cells traversed by each trajectory segment".into(),
            independent_target: ra,
            trajectory_target: rb,
            trajectory_corrected: rc,
        },
        masks: built.into_iter().map(|(_, m)| m).collect(),
        reconstructions: vec![ia, ib, ic],
    })
}

fn evaluate_mask(
    image: &Image,
    mask: &KSpaceMask,
    n_points: usize,
    seed: u64,
    cfg: &ComparisonConfig,
) -> Result<(SchemeResult, Image)> {
    let y = measure(image, mask)?;
    let op = SensingOperator::new(mask, cfg.wavelet_levels)?;
    let scale = op.adjoint(&y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let base = cfg.lambda_rel * scale;
    let runs = cfg
        .lambda_scales
        .par_iter()
        .map(|&s| {
            let recon = ReconConfig {
                lambda: base * s,
                max_iters: cfg.max_iters,
                tolerance: cfg.tolerance,
                wavelet_levels: cfg.wavelet_levels,
            };
            let out = reconstruct(&y, mask, &recon)?;
            Ok((LambdaResult { lambda: recon.lambda, psnr_db: psnr(image, &out)? }, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let headline = cfg.lambda_scales.iter().position(|&s| s == 1.0).unwrap_or(0);
    let (best, best_image) = runs[headline].clone();
    Ok((
        SchemeResult {
            psnr_db: best.psnr_db,
            sampled_fraction: mask.sampled_fraction(),
            n_points,
            lambda: best.lambda,
            lambda_grid: runs.into_iter().map(|(r, _)| r).collect(),
            seed,
        },
        best_image,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn measure_constant_dc_only() {
        let n = 8;
        let img = Image::new(n, vec![0.3; n * n]).unwrap();
        let mask = KSpaceMask::new(n, vec![false; n * n]).unwrap();
        let y = measure(&img, &mask).unwrap();
        assert_eq!(y.len(), 1);
        assert!(close(y[0].re, 0.3 * n as f64, 1e-12) && close(y[0].im, 0.0, 1e-12));
    }

    #[test]
    fn measure_full_mask_parseval() {
        let img = Image::phantom(64).unwrap();
        let y = measure(&img, &KSpaceMask::full(64).unwrap()).unwrap();
        let energy: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        let pixels: f64 = img.pixels().iter().map(|p| p * p).sum();
        assert!(close(energy / pixels, 1.0, 1e-9));
    }

    #[test]
    fn measure_impulse_is_flat() {
        let n = 16;
        let mut px = vec![0.0; n * n];
        px[5 * n + 9] = 1.0;
        let y = measure(&Image::new(n, px).unwrap(), &KSpaceMask::full(n).unwrap()).unwrap();
        assert!(y.iter().all(|v| close(v.norm(), 1.0 / n as f64, 1e-12)));
    }

    #[test]
    fn measure_size_mismatch() {
        let img = Image::zeros(8).unwrap();
        let mask = KSpaceMask::full(16).unwrap();
        assert!(matches!(measure(&img, &mask), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn image_validation() {
        assert!(Image::new(6, vec![0.0; 36]).is_err());
        assert!(Image::new(4, vec![0.0; 15]).is_err());
        assert!(Image::new(2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn phantom_in_range() {
        let p = Image::phantom(128).unwrap();
        assert!(p.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(p.pixels().iter().any(|&v| v > 0.5));
    }

    #[test]
    fn haar_round_trip_and_parseval() {
        let img = Image::phantom(64).unwrap();
        let mut c = img.pixels().to_vec();
        haar_forward(&mut c, 64, 5).unwrap();
        let e0: f64 = img.pixels().iter().map(|v| v * v).sum();
        let e1: f64 = c.iter().map(|v| v * v).sum();
        assert!(close(e0, e1, 1e-10 * e0));
        haar_inverse(&mut c, 64, 5).unwrap();
        for (a, b) in c.iter().zip(img.pixels()) {
            assert!(close(*a, *b, 1e-10));
        }
        assert!(haar_forward(&mut c, 64, 7).is_err());
    }

    #[test]
    fn haar_sparse_has_k_coefficients() {
        let img = Image::haar_sparse(64, 50, 4, 9).unwrap();
        let mut c = img.pixels().to_vec();
        haar_forward(&mut c, 64, 4).unwrap();
        assert_eq!(c.iter().filter(|v| v.abs() > 1e-9).count(), 50);
        let mean = img.pixels().iter().sum::<f64>() / 4096.0;
        assert!(close(mean, 0.5, 1e-9));
    }

    #[test]
    fn rasterize_horizontal_segment() {
        let eps = 1e-3;
        let curve = Curve::from_vertices(2, vec![0.0, 0.5 + eps, 1.0, 0.5 + eps]).unwrap();
        let mask = rasterize(&curve, 8).unwrap();
        // cells (i, 4) for every i; DC (4, 4) is among them
        for i in 0..8 {
            assert!(mask.is_marked(i, 4));
        }
        assert_eq!(mask.count(), 8);
    }

    #[test]
    fn rasterize_diagonal_matches_supersampling() {
        let curve = Curve::from_vertices(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mask = rasterize(&curve, 4).unwrap();
        let mut oracle = [false; 16];
        let samples = 100_000;
        for k in 0..samples {
            let t = k as f64 / (samples - 1) as f64;
            oracle[cell_of(&[t, t], 4)] = true;
        }
        oracle[KSpaceMask::dc_index(4)] = true;
        assert_eq!(mask.cells(), &oracle[..]);
        assert_eq!(mask.count(), 4);
    }

    #[test]
    fn rasterize_includes_touched_corner() {
        // passes exactly through the grid corner (0.25, 0.25)
        let curve = Curve::from_vertices(2, vec![0.1, 0.4, 0.4, 0.1]).unwrap();
        let mask = rasterize(&curve, 4).unwrap();
        assert!(mask.is_marked(0, 1) && mask.is_marked(1, 0) && mask.is_marked(1, 1));
    }

    #[test]
    fn iid_mask_budgets() {
        let n = 16;
        let target = DensityGrid::radial_decay(2, n, 0.1, 2.0).unwrap();
        assert_eq!(iid_mask(&target, n * n, 1).unwrap().count(), n * n);
        let fifth = iid_mask(&target, n * n / 5, 1).unwrap();
        assert_eq!(fifth.count(), n * n / 5);
        assert!(fifth.cells()[KSpaceMask::dc_index(n)]);
        assert!(matches!(iid_mask(&target, n * n + 1, 1), Err(Error::Infeasible(_))));
        assert!(matches!(iid_mask(&target, 0, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn iid_mask_concentrated_target() {
        let n = 8;
        let mut values = vec![0.0; n * n];
        let support = [KSpaceMask::dc_index(n), 3, 17, 40];
        for &i in &support {
            values[i] = 1.0;
        }
        let target = DensityGrid::new(2, n, values).unwrap();
        let mask = iid_mask(&target, support.len(), 5).unwrap();
        for (i, &on) in mask.cells().iter().enumerate() {
            assert_eq!(on, support.contains(&i));
        }
        assert!(matches!(iid_mask(&target, 5, 5), Err(Error::Infeasible(_))));
    }

    #[test]
    fn psnr_examples() {
        let a = Image::new(4, vec![0.5; 16]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = Image::new(4, vec![0.6; 16]).unwrap();
        assert!(close(psnr(&a, &b).unwrap(), 20.0, 1e-9));
        let z = Image::zeros(4).unwrap();
        assert!(close(psnr(&a, &z).unwrap(), 10.0 * 4f64.log10(), 1e-12));
        assert!(psnr(&a, &Image::zeros(8).unwrap()).is_err());
    }

    #[test]
    fn reconstruct_zero_measurements() {
        let n = 16;
        let mask = KSpaceMask::full(n).unwrap();
        let y = vec![Complex64::new(0.0, 0.0); n * n];
        let out = reconstruct(&y, &mask, &ReconConfig::default()).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruct_rejects_non_finite() {
        let mask = KSpaceMask::full(4).unwrap();
        let mut y = vec![Complex64::new(0.0, 0.0); 16];
        y[3].re = f64::NAN;
        assert!(matches!(reconstruct(&y, &mask, &ReconConfig::default()), Err(Error::InvalidInput(_))));
        let bad = ReconConfig { lambda: 0.0, ..ReconConfig::default() };
        assert!(reconstruct(&[Complex64::new(0.0, 0.0); 16], &mask, &bad).is_err());
    }

    #[test]
    fn budget_rounding() {
        assert_eq!(budget_for(128, 5.0).unwrap(), 3277);
        assert_eq!(budget_for(128, 1.25).unwrap(), 13107);
        assert!(budget_for(128, 1.0).is_err());
    }
}
