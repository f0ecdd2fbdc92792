use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use tsps::csmri::{self, ComparisonConfig, Image, Scheme};
use tsps::density::DensityGrid;
use tsps::tsp::{self, Metric, Region, DEFAULT_MAX_PASSES};
use tsps::{io, verify, Curve, Error};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEMO_CORE: f64 = 0.1;
const DEMO_DECAY: f64 = 1.5;

#[derive(Parser)]
#[command(name = "tsps", version, about = "Variable-density sampling curves from travelling-salesman paths")]
struct Cli {
    /// Worker threads; overrides TSPS_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Heuristic {
    Nn2opt,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Boundary,
}

#[derive(Subcommand)]
enum Command {
    /// Draw points from a density file.
    Sample {
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw from the exponent-corrected density (default).
        #[arg(long, overrides_with = "no_correct")]
        correct: bool,
        /// Draw from the density as given.
        #[arg(long, overrides_with = "correct")]
        no_correct: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Order a point CSV into a short path; writes the order and a JSON sidecar.
    Path {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = Heuristic::Nn2opt)]
        heuristic: Heuristic,
        /// Skip the 2-opt stage of nn2opt.
        #[arg(long)]
        no_2opt: bool,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_PASSES)]
        max_passes: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
        metric: MetricArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn points (and optionally a path) into a curve and its cell measure.
    Curve {
        #[arg(long)]
        points: PathBuf,
        /// Visit order; nearest neighbour + 2-opt from point 0 when absent.
        #[arg(long)]
        path: Option<PathBuf>,
        /// Partition resolution (4 for d = 2, 2 otherwise).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrected vs uncorrected convergence report (JSON plus CSV).
    Verify {
        #[arg(long)]
        density: PathBuf,
        #[arg(long = "Ns", value_delimiter = ',', default_value = "100,1000,5000")]
        ns: Vec<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the three k-space sampling schemes on an image.
    Mri {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        density: PathBuf,
        /// Acceleration factor; each mask samples 1/r of k-space.
        #[arg(long, default_value_t = 5.0)]
        r: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the default radial density and phantom and run verify and mri on them.
    Demo {
        #[arg(long, default_value_t = 128)]
        side: usize,
        #[arg(long, default_value_t = 5.0)]
        r: f64,
        #[arg(long = "Ns", value_delimiter = ',', default_value = "100,1000,5000")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InstanceTooLarge { .. } | Error::Infeasible(_) => 3,
            Error::Calibration(_) | Error::ZeroLength => 4,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Seed, version and command line stamped into every artifact.
struct Stamp {
    args: Vec<String>,
    seed: u64,
}

impl Stamp {
    fn json(&self, body: impl Serialize) -> Outcome<Vec<u8>> {
        let mut obj = match serde_json::to_value(body).map_err(|e| Failure { code: 4, msg: e.to_string() })? {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("data".into(), other);
                m
            }
        };
        obj.insert("seed".into(), json!(self.seed));
        obj.insert("version".into(), json!(VERSION));
        obj.insert("args".into(), json!(self.args));
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("JSON values serialize");
        text.push('\n');
        Ok(text.into_bytes())
    }

    fn comment(&self) -> String {
        format!("# tsps {VERSION} seed {} args {}\n", self.seed, self.args.join(" ").replace('\n', " "))
    }

    fn pgm(&self, encoded: Vec<u8>) -> Vec<u8> {
        // "P5\n" is always the first line of our own encoder
        let mut out = encoded[..3].to_vec();
        out.extend_from_slice(self.comment().as_bytes());
        out.extend_from_slice(&encoded[3..]);
        out
    }
}

fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn check_output_file(out: &Path) -> Outcome<()> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Failure::input(format!("output directory {} does not exist", parent.display())));
    }
    if out.is_dir() {
        return Err(Failure::input(format!("output {} is a directory", out.display())));
    }
    Ok(())
}

fn check_output_dir(out: &Path) -> Outcome<()> {
    if out.exists() && !out.is_dir() {
        return Err(Failure::input(format!("output {} exists and is not a directory", out.display())));
    }
    Ok(())
}

fn with_file<T>(path: &Path, read: impl FnOnce(&Path) -> tsps::Result<T>) -> Outcome<T> {
    read(path).map_err(|e| {
        let f = Failure::from(e);
        Failure { code: f.code, msg: format!("{}: {}", path.display(), f.msg) }
    })
}

fn default_m(dim: usize) -> usize {
    if dim == 2 {
        4
    } else {
        2
    }
}

fn write(files: Vec<(PathBuf, Vec<u8>)>) -> Outcome<()> {
    io::write_all_atomic(&files).map_err(Failure::from)
}

fn comparison_files(
    stamp: &Stamp,
    dir: &Path,
    image: &Image,
    density: &DensityGrid,
    r: f64,
    iters: usize,
) -> Outcome<Vec<(PathBuf, Vec<u8>)>> {
    let cfg = ComparisonConfig { max_iters: iters, ..ComparisonConfig::default() };
    let cmp = csmri::scheme_comparison(image, density, r, stamp.seed, &cfg)?;
    let mut files = Vec::new();
    for (k, scheme) in Scheme::ALL.iter().enumerate() {
        let label = scheme.label();
        files.push((dir.join(format!("mask_{label}.pgm")), stamp.pgm(io::encode_mask(&cmp.masks[k]))));
        files.push((dir.join(format!("recon_{label}.pgm")), stamp.pgm(io::encode_pgm(&cmp.reconstructions[k], 65535))));
    }
    files.push((dir.join("report.json"), stamp.json(&cmp.report)?));
    Ok(files)
}

fn run(cli: Cli, args: Vec<String>) -> Outcome<()> {
    match cli.command {
        Command::Sample { density, n, seed, correct: _, no_correct, out } => {
            check_output_file(&out)?;
            let stamp = Stamp { args, seed };
            let grid = with_file(&density, io::read_density)?;
            let drawing = if no_correct { grid.normalize()? } else { grid.exponent_transform()? };
            let points = drawing.sample(n, seed);
            let meta = json!({ "n": n, "dim": points.dim(), "correct": !no_correct });
            write(vec![(out.clone(), io::format_points(&points).into_bytes()), (sidecar(&out), stamp.json(meta)?)])
        }
        Command::Path { points, heuristic, no_2opt, start, max_passes, metric, seed, out } => {
            check_output_file(&out)?;
            let stamp = Stamp { args, seed };
            let pts = with_file(&points, |p| io::read_points(p, seed))?;
            let metric = match metric {
                MetricArg::Euclidean => Metric::Euclidean,
                MetricArg::Boundary => Metric::Boundary(Region::unit(pts.dim())),
            };
            let path = match heuristic {
                Heuristic::Exact => {
                    if pts.is_empty() {
                        return Err(Failure::input("no points to order"));
                    }
                    tsp::exact_path(&pts, &metric)?
                }
                Heuristic::Nn2opt if no_2opt => tsp::nearest_neighbor(&pts, &metric, start)?,
                Heuristic::Nn2opt => tsp::heuristic_path(&pts, &metric, start, max_passes)?,
            };
            let name = match heuristic {
                Heuristic::Exact => "exact",
                Heuristic::Nn2opt if no_2opt => "nn",
                Heuristic::Nn2opt => "nn2opt",
            };
            let meta = json!({
                "length": path.length,
                "metric": path.metric.name(),
                "n": path.len(),
                "heuristic": name,
            });
            write(vec![(out.clone(), io::format_path(&path).into_bytes()), (sidecar(&out), stamp.json(meta)?)])
        }
        Command::Curve { points, path, m, seed, out } => {
            check_output_file(&out)?;
            let stamp = Stamp { args, seed };
            let pts = with_file(&points, |p| io::read_points(p, seed))?;
            let order = match path {
                Some(p) => with_file(&p, |p| io::parse_path_order(&std::fs::read_to_string(p)?))?,
                None if pts.is_empty() => return Err(Failure::input("no points to join")),
                None => tsp::heuristic_path(&pts, &Metric::Euclidean, 0, DEFAULT_MAX_PASSES)?.order,
            };
            let curve = Curve::parameterize(&pts, &order)?;
            let measure = curve.empirical_measure(m.unwrap_or_else(|| default_m(pts.dim())))?;
            write(vec![(out.clone(), io::format_curve(&curve).into_bytes()), (sidecar(&out), stamp.json(&measure)?)])
        }
        Command::Verify { density, ns, m, seed, out } => {
            check_output_file(&out)?;
            let stamp = Stamp { args, seed };
            let grid = with_file(&density, io::read_density)?;
            let m = m.unwrap_or_else(|| default_m(grid.dim()));
            let report = verify::convergence_experiment(&grid, &ns, m, seed)?;
            write(vec![
                (out.with_extension("json"), stamp.json(&report)?),
                (out.with_extension("csv"), report.to_csv().into_bytes()),
            ])
        }
        Command::Mri { image, density, r, seed, iters, out } => {
            check_output_dir(&out)?;
            let stamp = Stamp { args, seed };
            let img = with_file(&image, io::read_pgm)?;
            let grid = with_file(&density, io::read_density)?;
            let files = comparison_files(&stamp, &out, &img, &grid, r, iters)?;
            std::fs::create_dir_all(&out).map_err(|e| Failure::from(Error::from(e)))?;
            write(files)
        }
        Command::Demo { side, r, ns, m, seed, iters, out } => {
            check_output_dir(&out)?;
            let stamp = Stamp { args, seed };
            let grid = DensityGrid::radial_decay(2, side, DEMO_CORE, DEMO_DECAY)?;
            let image = Image::phantom(side)?;
            let report = verify::convergence_experiment(&grid, &ns, m, seed)?;
            let mut files = comparison_files(&stamp, &out, &image, &grid, r, iters)?;
            let mut density_text = stamp.comment();
            density_text.push_str(&io::format_density(&grid));
            files.push((out.join("density.txt"), density_text.into_bytes()));
            files.push((out.join("phantom.pgm"), stamp.pgm(io::encode_pgm(&image, 65535))));
            files.push((out.join("verify.json"), stamp.json(&report)?));
            files.push((out.join("verify.csv"), report.to_csv().into_bytes()));
            std::fs::create_dir_all(&out).map_err(|e| Failure::from(Error::from(e)))?;
            write(files)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Outcome<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("TSPS_THREADS") {
            Ok(v) if !v.trim().is_empty() => {
                Some(v.trim().parse().map_err(|_| Failure::input(format!("TSPS_THREADS `{v}` is not a count")))?)
            }
            _ => None,
        },
    };
    if let Some(t) = threads {
        // 0 lets rayon pick, matching its own convention
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure { code: 4, msg: e.to_string() })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = configure_threads(cli.threads).and_then(|_| run(cli, args));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tsps: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
