use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use tsps::csmri::Image;
use tsps::density::DensityGrid;
use tsps::io;

fn tsps(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsps")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = tsps(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn write_density(dir: &Path, name: &str, d: &DensityGrid) {
    fs::write(dir.join(name), io::format_density(d)).unwrap();
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn sample_is_reproducible_and_stamped() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "u.txt", &DensityGrid::uniform(2, 4).unwrap());
    ok(d, &["sample", "--density", "u.txt", "--n", "100", "--seed", "7", "--out", "a.csv"]);
    let first = fs::read(d.join("a.csv")).unwrap();
    ok(d, &["sample", "--density", "u.txt", "--n", "100", "--seed", "7", "--out", "a.csv"]);
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert_eq!(text.lines().next(), Some("x0,x1"));
    let meta = json(d.join("a.json"));
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["args"][0], "sample");
}

#[test]
fn sample_zero_points_writes_header_only() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "u.txt", &DensityGrid::uniform(2, 4).unwrap());
    ok(d, &["sample", "--density", "u.txt", "--n", "0", "--out", "e.csv"]);
    assert_eq!(fs::read_to_string(d.join("e.csv")).unwrap(), "x0,x1\n");
}

#[test]
fn correction_changes_the_draw() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "r.txt", &DensityGrid::radial_decay(2, 8, 0.2, 2.0).unwrap());
    ok(d, &["sample", "--density", "r.txt", "--n", "50", "--correct", "--out", "c.csv"]);
    ok(d, &["sample", "--density", "r.txt", "--n", "50", "--no-correct", "--out", "u.csv"]);
    assert_ne!(fs::read(d.join("c.csv")).unwrap(), fs::read(d.join("u.csv")).unwrap());
}

#[test]
fn parse_failures_exit_2_and_name_line_and_field() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.txt"), "density 2 2\n1 1\n1 oops\n").unwrap();
    let out = tsps(d, &["sample", "--density", "bad.txt", "--n", "5", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3") && msg.contains("field 2"), "{msg}");
    assert_eq!(files_in(d), vec!["bad.txt"]);
}

#[test]
fn exact_path_on_corners_and_single_point() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.csv"), "x0,x1\n0,0\n1,0\n1,1\n0,1\n").unwrap();
    ok(d, &["path", "--points", "c.csv", "--heuristic", "exact", "--out", "p.csv"]);
    let meta = json(d.join("p.json"));
    assert!((meta["length"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(meta["metric"], "euclidean");
    assert_eq!(meta["n"], 4);
    assert_eq!(fs::read_to_string(d.join("p.csv")).unwrap().lines().next(), Some("index"));

    fs::write(d.join("one.csv"), "x0,x1\n0.5,0.5\n").unwrap();
    ok(d, &["path", "--points", "one.csv", "--out", "q.csv"]);
    assert_eq!(json(d.join("q.json"))["length"].as_f64(), Some(0.0));
}

#[test]
fn two_opt_never_lengthens_the_nearest_neighbour_path() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "u.txt", &DensityGrid::uniform(2, 2).unwrap());
    ok(d, &["sample", "--density", "u.txt", "--n", "300", "--seed", "3", "--out", "p.csv"]);
    ok(d, &["path", "--points", "p.csv", "--no-2opt", "--out", "nn.csv"]);
    ok(d, &["path", "--points", "p.csv", "--out", "opt.csv"]);
    let nn = json(d.join("nn.json"))["length"].as_f64().unwrap();
    let opt = json(d.join("opt.json"))["length"].as_f64().unwrap();
    assert!(opt <= nn && opt < 0.95 * nn, "{opt} vs {nn}");
}

#[test]
fn exact_path_too_large_exits_3() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "u.txt", &DensityGrid::uniform(2, 2).unwrap());
    ok(d, &["sample", "--density", "u.txt", "--n", "14", "--out", "p.csv"]);
    let out = tsps(d, &["path", "--points", "p.csv", "--heuristic", "exact", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.join("x.csv").exists() && !d.join("x.json").exists());
}

#[test]
fn curve_writes_vertices_and_measure() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "u.txt", &DensityGrid::uniform(2, 2).unwrap());
    ok(d, &["sample", "--density", "u.txt", "--n", "40", "--out", "p.csv"]);
    ok(d, &["path", "--points", "p.csv", "--out", "o.csv"]);
    ok(d, &["curve", "--points", "p.csv", "--path", "o.csv", "--out", "c.csv"]);
    let measure = json(d.join("c.json"));
    assert_eq!(measure["m"], 4);
    let masses: Vec<f64> = measure["masses"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(masses.len(), 16);
    assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let path_len = json(d.join("o.json"))["length"].as_f64().unwrap();
    assert!((measure["total_length"].as_f64().unwrap() - path_len).abs() < 1e-12);
    assert_eq!(fs::read_to_string(d.join("c.csv")).unwrap().lines().count(), 41);

    // without --path the same default heuristic is used
    ok(d, &["curve", "--points", "p.csv", "--out", "c2.csv"]);
    assert_eq!(fs::read(d.join("c.csv")).unwrap(), fs::read(d.join("c2.csv")).unwrap());
}

#[test]
fn verify_on_uniform_density_shows_no_correction() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "u.txt", &DensityGrid::uniform(2, 8).unwrap());
    ok(d, &["verify", "--density", "u.txt", "--Ns", "100,400", "--out", "v.json"]);
    let report = json(d.join("v.json"));
    for rec in report["records"].as_array().unwrap() {
        let (c, u) = (rec["tv_corrected"].as_f64().unwrap(), rec["tv_uncorrected"].as_f64().unwrap());
        assert!((c - u).abs() < 1e-12, "{c} vs {u}");
    }
}

#[test]
fn verify_radial_three_levels_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_density(d, "r.txt", &DensityGrid::radial_decay(2, 64, 0.1, 2.0).unwrap());
    let args = ["verify", "--density", "r.txt", "--Ns", "100,1000,5000", "--m", "4", "--seed", "0", "--out", "v.json"];
    ok(d, &args);
    let csv = fs::read_to_string(d.join("v.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("N,"));
    let first = fs::read(d.join("v.json")).unwrap();
    ok(d, &args);
    assert_eq!(fs::read(d.join("v.json")).unwrap(), first);
}

fn mri_inputs(d: &Path, side: usize) {
    fs::write(d.join("img.pgm"), io::encode_pgm(&Image::phantom(side).unwrap(), 65535)).unwrap();
    write_density(d, "t.txt", &DensityGrid::radial_decay(2, side, 0.1, 1.5).unwrap());
}

fn fractions(report: &Value) -> Vec<f64> {
    ["A_iid_target", "B_tsp_target", "C_tsp_corrected"]
        .iter()
        .map(|k| report[k]["sampled_fraction"].as_f64().unwrap())
        .collect()
}

fn mask_fraction(path: PathBuf) -> f64 {
    let bytes = fs::read(path).unwrap();
    let img = io::parse_pgm(&bytes).unwrap();
    img.pixels().iter().filter(|&&v| v > 0.5).count() as f64 / img.pixels().len() as f64
}

#[test]
fn mri_at_r5_on_128_phantom() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    mri_inputs(d, 128);
    ok(d, &["mri", "--image", "img.pgm", "--density", "t.txt", "--r", "5", "--out", "out"]);
    let report = json(d.join("out/report.json"));
    for f in fractions(&report) {
        assert!((0.196..=0.204).contains(&f), "{f}");
    }
    for label in ["A_iid_target", "B_tsp_target", "C_tsp_corrected"] {
        let f = mask_fraction(d.join(format!("out/mask_{label}.pgm")));
        assert!((0.196..=0.204).contains(&f), "{label}: {f}");
        assert!(d.join(format!("out/recon_{label}.pgm")).exists());
    }
    assert_eq!(report["seed"], 0);
    assert_eq!(report["args"][0], "mri");
}

#[test]
fn mri_near_full_sampling() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    mri_inputs(d, 64);
    ok(d, &["mri", "--image", "img.pgm", "--density", "t.txt", "--r", "1.25", "--out", "out"]);
    for f in fractions(&json(d.join("out/report.json"))) {
        assert!((f - 0.8).abs() <= 0.8 * 0.02 + 1e-12, "{f}");
    }
}

#[test]
fn mri_input_errors_leave_no_outputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    mri_inputs(d, 64);
    let out = tsps(d, &["mri", "--image", "img.pgm", "--density", "missing.txt", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("out").exists());

    write_density(d, "small.txt", &DensityGrid::uniform(2, 32).unwrap());
    let out = tsps(d, &["mri", "--image", "img.pgm", "--density", "small.txt", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("out").exists());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let run = |sub: &str, threads: &str| {
        let dir = tmp.path().join(sub);
        fs::create_dir(&dir).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_tsps"))
            .current_dir(&dir)
            .env("TSPS_THREADS", threads)
            .args(["demo", "--side", "64", "--Ns", "100,500", "--out", "out"])
            .output()
            .unwrap();
        assert!(out.status.success());
        dir.join("out")
    };
    let (one, many) = (run("a", "1"), run("b", "3"));
    let names = files_in(&one);
    assert_eq!(names, files_in(&many));
    for name in names {
        assert_eq!(fs::read(one.join(&name)).unwrap(), fs::read(many.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn bad_thread_variable_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tsps"))
        .current_dir(tmp.path())
        .env("TSPS_THREADS", "lots")
        .args(["demo", "--side", "64", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn demo_writes_loadable_inputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["demo", "--side", "64", "--Ns", "100,500", "--out", "demo"]);
    let density = io::read_density(&d.join("demo/density.txt")).unwrap();
    assert_eq!(density, DensityGrid::radial_decay(2, 64, 0.1, 1.5).unwrap());
    let phantom = io::read_pgm(&d.join("demo/phantom.pgm")).unwrap();
    assert_eq!(phantom.side(), 64);
}
