//! Acceptance run: every criterion prints one PASS/FAIL line; the process
//! fails if any criterion does.

use std::time::{Duration, Instant};

use rand::Rng;
use tsps::csmri::{
    iid_mask, measure, psnr, reconstruct, scheme_comparison, ComparisonConfig, ComparisonReport, Complex64, Image,
    KSpaceMask, ReconConfig, SensingOperator,
};
use tsps::density::{derive_seed, rng_from_seed, DensityGrid};
use tsps::tsp::{exact_path, nearest_neighbor, two_opt, Metric, DEFAULT_MAX_PASSES};
use tsps::verify::{bhh_estimate, convergence_experiment, lemma_suite, trajectory, ConvergenceReport};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cell(p: &[f64], m: usize) -> usize {
    p.iter().fold(0, |acc, &x| acc * m + ((x * m as f64).floor() as usize).min(m - 1))
}

fn exponent_round_trip() -> Outcome {
    let mut rng = rng_from_seed(1);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let (dim, res) = if k % 2 == 0 { (2, 6) } else { (3, 3) };
        let cells = res * res * if dim == 3 { res } else { 1 };
        let raw: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.001..1.0)).collect();
        let t = DensityGrid::new(dim, res, raw).unwrap().normalize().unwrap();
        let back = t.exponent_transform().unwrap().curve_limit_density().unwrap();
        for (a, b) in t.values().iter().zip(back.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max cell error {worst:.2e} over 100 grids"))
}

fn exact_oracle_checks() -> Outcome {
    let uniform = DensityGrid::uniform(2, 1).unwrap();
    let mut below_exact = 0;
    let mut lengthened = 0;
    for seed in 0..100u64 {
        let n = 3 + (seed as usize % 8);
        let pts = uniform.sample(n, derive_seed(2024, seed));
        let exact = exact_path(&pts, &Metric::Euclidean).unwrap();
        let nn = nearest_neighbor(&pts, &Metric::Euclidean, 0).unwrap();
        let opt = two_opt(&pts, &nn, DEFAULT_MAX_PASSES).unwrap();
        below_exact += [nn.length, opt.length].iter().filter(|&&l| l < exact.length - 1e-12).count();
        lengthened += (opt.length > nn.length) as usize;
    }
    let lemmas = lemma_suite(10, 100, 0).unwrap();
    outcome(
        below_exact == 0 && lengthened == 0 && lemmas.lower_bound_violations == 0,
        format!(
            "heuristic below exact: {below_exact}, 2-opt lengthened: {lengthened}, boundary lower-bound violations: {}",
            lemmas.lower_bound_violations
        ),
    )
}

fn measure_matches_monte_carlo() -> Outcome {
    let uniform = DensityGrid::uniform(2, 1).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for c in 0..20u64 {
        let (_, curve) = trajectory(&uniform.sample(50, derive_seed(300, c))).unwrap();
        let measure = curve.empirical_measure(4).unwrap();
        worst_sum = worst_sum.max((measure.masses.iter().sum::<f64>() - 1.0).abs());
        let mut rng = rng_from_seed(derive_seed(900, c));
        let samples = 1_000_000;
        let mut hits = [0usize; 16];
        for _ in 0..samples {
            hits[cell(&curve.point_at(rng.gen::<f64>()).unwrap(), 4)] += 1;
        }
        for (h, m) in hits.iter().zip(&measure.masses) {
            worst = worst.max((*h as f64 / samples as f64 - m).abs());
        }
    }
    outcome(
        worst < 3e-3 && worst_sum <= 1e-9,
        format!("max cell deviation {worst:.2e}, max |sum - 1| {worst_sum:.1e} over 20 curves"),
    )
}

fn convergence_run() -> ConvergenceReport {
    let target = DensityGrid::radial_decay(2, 64, 0.1, 1.5).unwrap();
    convergence_experiment(&target, &[100, 1000, 5000], 4, 0).unwrap()
}

fn corrected_curves_follow_target(report: &ConvergenceReport) -> Outcome {
    let (first, last) = (&report.records[0], &report.records[2]);
    outcome(
        last.tv_corrected < first.tv_corrected && last.tv_corrected < last.tv_uncorrected,
        format!(
            "tv_corrected {:.4} -> {:.4} -> {:.4}; tv_uncorrected(5000) {:.4}; control limit {:.4}",
            first.tv_corrected,
            report.records[1].tv_corrected,
            last.tv_corrected,
            last.tv_uncorrected,
            report.control_limit_tv
        ),
    )
}

fn bhh_ratio_stabilizes() -> Outcome {
    let est = bhh_estimate(&DensityGrid::uniform(2, 1).unwrap(), &[2000, 4000], 0).unwrap();
    let drift = est.ratios[1] / est.ratios[0] - 1.0;
    outcome(
        drift.abs() < 0.05,
        format!("ratio(2000) {:.4}, ratio(4000) {:.4}, drift {:+.4}", est.ratios[0], est.ratios[1], drift),
    )
}

fn compressed_sensing_sanity() -> Outcome {
    let img = Image::phantom(64).unwrap();
    let full = KSpaceMask::full(64).unwrap();
    let cfg = ReconConfig { lambda: 1e-10, max_iters: 50, tolerance: 1e-14, wavelet_levels: 4 };
    let rec = reconstruct(&measure(&img, &full).unwrap(), &full, &cfg).unwrap();
    let inversion = img.pixels().iter().zip(rec.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let uniform = DensityGrid::uniform(2, 64).unwrap();
    let mask = iid_mask(&uniform, (0.4 * 4096.0_f64).round() as usize, 7).unwrap();
    let op = SensingOperator::new(&mask, 4).unwrap();
    let mut rng = rng_from_seed(8);
    let mut adjoint: f64 = 0.0;
    for _ in 0..10 {
        let u: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<Complex64> = (0..op.measurement_count())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let lhs: f64 = op.apply(&u).iter().zip(&v).map(|(a, b)| (a * b.conj()).re).sum();
        let rhs: f64 = u.iter().zip(op.adjoint(&v)).map(|(a, b)| a * b).sum();
        adjoint = adjoint.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }

    let sparse = Image::haar_sparse(64, 50, 4, 1).unwrap();
    let cfg = ReconConfig { lambda: 1e-4, max_iters: 1000, tolerance: 1e-10, wavelet_levels: 4 };
    let rec = reconstruct(&measure(&sparse, &mask).unwrap(), &mask, &cfg).unwrap();
    let db = psnr(&sparse, &rec).unwrap();
    outcome(
        inversion < 1e-6 && adjoint <= 1e-9 && db >= 60.0,
        format!("full-mask max error {inversion:.1e}, adjoint mismatch {adjoint:.1e}, sparse recovery {db:.1} dB"),
    )
}

fn scheme_runs() -> Vec<ComparisonReport> {
    let img = Image::phantom(128).unwrap();
    let target = DensityGrid::radial_decay(2, 128, 0.1, 1.5).unwrap();
    (0..5)
        .map(|seed| scheme_comparison(&img, &target, 5.0, seed, &ComparisonConfig::default()).unwrap().report)
        .collect()
}

fn corrected_trajectories_beat_uncorrected(reports: &[ComparisonReport]) -> Outcome {
    let mean = |f: &dyn Fn(&ComparisonReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    let a = mean(&|r| r.independent_target.psnr_db);
    let b = mean(&|r| r.trajectory_target.psnr_db);
    let c = mean(&|r| r.trajectory_corrected.psnr_db);
    outcome(
        c - b >= 3.0,
        format!("mean PSNR over 5 seeds: A {a:.2} dB, B {b:.2} dB, C {c:.2} dB, C - B {:.2} dB", c - b),
    )
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap()
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, limit: Duration, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let pass = out.pass && took < limit;
        failures += !pass as usize;
        let status = if pass { "PASS" } else { "FAIL" };
        println!("{status} {name}: {} ({:.1} s, limit {} s)", out.detail, took.as_secs_f64(), limit.as_secs());
    };

    report("exponent round trip", Duration::from_secs(1), &mut exponent_round_trip);
    report("exact-oracle path checks", Duration::from_secs(30), &mut exact_oracle_checks);
    report("empirical measure vs Monte-Carlo", Duration::from_secs(30), &mut measure_matches_monte_carlo);

    let mut convergence = None;
    report("corrected curves follow the target", Duration::from_secs(120), &mut || {
        let r = convergence_run();
        let out = corrected_curves_follow_target(&r);
        convergence = Some(r);
        out
    });
    report("BHH ratio stabilizes", Duration::from_secs(120), &mut bhh_ratio_stabilizes);
    report("compressed-sensing sanity", Duration::from_secs(60), &mut compressed_sensing_sanity);

    let mut schemes = None;
    report("corrected trajectories beat uncorrected ones", Duration::from_secs(600), &mut || {
        let r = scheme_runs();
        let out = corrected_trajectories_beat_uncorrected(&r);
        schemes = Some(r);
        out
    });
    report("repeated runs are byte-identical", Duration::from_secs(720), &mut || {
        let first = (json(convergence.as_ref().unwrap()), json(schemes.as_ref().unwrap()));
        let second = (json(&convergence_run()), json(&scheme_runs()));
        outcome(
            first == second,
            format!("convergence report {} bytes, scheme reports {} bytes", first.0.len(), first.1.len()),
        )
    });

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
