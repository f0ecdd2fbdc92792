//! Plain-text, CSV and PGM formats, plus atomic file output.
//!
//! Density files hold a `density <d> <g>` header followed by `g^d`
//! whitespace-separated values, row-major with the last axis fastest. Lines
//! starting with `#` are comments.
//! Point and curve files are CSV with a `x0,x1[,x2]` header and one point per
//! line. Path files are CSV with an `index` header. Images and masks are
//! binary PGM (P5); masks are written as 0/255 in the centred k-space layout.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use crate::csmri::{Image, KSpaceMask};
use crate::curve::Curve;
use crate::density::{DensityGrid, PointSet};
use crate::error::{Error, Result};
use crate::tsp::Path;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses the density text format. Line numbers in errors are 1-based.
pub fn parse_density(text: &str) -> Result<DensityGrid> {
    let mut tokens = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .flat_map(|(k, l)| l.split_whitespace().enumerate().map(move |(f, t)| (k + 1, f + 1, t)));
    let (line, _, word) = tokens.next().ok_or_else(|| parse_err(1, "empty density file"))?;
    if word != "density" {
        return Err(parse_err(line, format!("field 1: expected `density`, found `{word}`")));
    }
    let mut header = |name: &str| -> Result<usize> {
        let (l, f, t) = tokens.next().ok_or_else(|| parse_err(line, format!("missing {name} in header")))?;
        t.parse::<usize>().map_err(|_| parse_err(l, format!("field {f}: {name} `{t}` is not a non-negative integer")))
    };
    let dim = header("dimension")?;
    let res = header("resolution")?;
    let count = res
        .checked_pow(dim as u32)
        .filter(|&c| c > 0)
        .ok_or_else(|| parse_err(line, format!("bad grid size {res}^{dim}")))?;
    let mut values = Vec::with_capacity(count.min(1 << 24));
    let mut last_line = line;
    for (l, f, t) in tokens {
        if values.len() == count {
            return Err(parse_err(l, format!("field {f}: more than {count} values")));
        }
        let v: f64 = t.parse().map_err(|_| parse_err(l, format!("field {f}: `{t}` is not a number")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(parse_err(l, format!("field {f}: value {v} must be finite and non-negative")));
        }
        values.push(v);
        last_line = l;
    }
    if values.len() != count {
        return Err(parse_err(last_line, format!("expected {count} values, found {}", values.len())));
    }
    DensityGrid::new(dim, res, values)
}

pub fn read_density(path: &FsPath) -> Result<DensityGrid> {
    parse_density(&fs::read_to_string(path)?)
}

/// One grid row (last axis) per line.
pub fn format_density(density: &DensityGrid) -> String {
    let g = density.resolution();
    let mut out = format!("density {} {}\n", density.dim(), g);
    for row in density.values().chunks(g) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

fn coordinate_header(dim: usize) -> String {
    (0..dim).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",")
}

fn format_rows<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> String {
    let mut out = coordinate_header(dim);
    out.push('\n');
    for p in rows {
        let cells: Vec<String> = p.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn format_points(points: &PointSet) -> String {
    format_rows(points.dim(), points.iter())
}

/// Parses a point CSV. The header fixes the dimension; the seed of the
/// returned set is `seed`.
pub fn parse_points(text: &str, seed: u64) -> Result<PointSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let names: Vec<&str> = head.split(',').map(str::trim).collect();
    let dim = names.len();
    if names.iter().enumerate().any(|(k, n)| *n != format!("x{k}")) {
        return Err(parse_err(1, format!("header `{head}` is not of the form x0,x1[,x2]")));
    }
    let mut coords = Vec::new();
    for (k, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim {
            return Err(parse_err(k + 1, format!("{} fields, header has {dim}", fields.len())));
        }
        for (f, t) in fields.iter().enumerate() {
            let x: f64 = t.parse().map_err(|_| parse_err(k + 1, format!("field {}: `{t}` is not a number", f + 1)))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(parse_err(k + 1, format!("field {}: coordinate {x} outside [0, 1]", f + 1)));
            }
            coords.push(x);
        }
    }
    PointSet::new(dim, coords, seed)
}

pub fn read_points(path: &FsPath, seed: u64) -> Result<PointSet> {
    parse_points(&fs::read_to_string(path)?, seed)
}

pub fn format_path(path: &Path) -> String {
    let mut out = String::from("index\n");
    for i in &path.order {
        out.push_str(&i.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_path_order(text: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "index" => {}
        _ => return Err(parse_err(1, "expected header `index`")),
    }
    lines
        .map(|(k, l)| {
            l.trim().parse().map_err(|_| parse_err(k + 1, format!("field 1: `{}` is not an index", l.trim())))
        })
        .collect()
}

/// Curve vertices in traversal order, same layout as a point CSV.
pub fn format_curve(curve: &Curve) -> String {
    format_rows(curve.dim(), curve.vertices())
}

/// Decodes a binary PGM (P5), 8 or 16 bit, mapping samples linearly onto
/// `[0,1]`. The image must be square with a power-of-two side.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut at = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while at < bytes.len() && (bytes[at].is_ascii_whitespace() || bytes[at] == b'#') {
            if bytes[at] == b'#' {
                while at < bytes.len() && bytes[at] != b'\n' {
                    at += 1;
                }
            } else {
                at += 1;
            }
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() && bytes[at] != b'#' {
            at += 1;
        }
        if start == at {
            return Err(Error::InvalidInput("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..at]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::InvalidInput(format!("unsupported image magic `{}`; need binary PGM (P5)", fields[0])));
    }
    let num = |k: usize, name: &str| -> Result<usize> {
        fields[k].parse().map_err(|_| Error::InvalidInput(format!("PGM {name} `{}` is not an integer", fields[k])))
    };
    let (w, h, maxval) = (num(1, "width")?, num(2, "height")?, num(3, "maxval")?);
    if w != h {
        return Err(Error::InvalidInput(format!("image is {w}x{h}; need a square image")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::InvalidInput(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    at += 1;
    let width = if maxval < 256 { 1 } else { 2 };
    let need = w * h * width;
    let raster = bytes.get(at..at + need).ok_or_else(|| {
        Error::InvalidInput(format!("PGM raster has {} bytes, expected {need}", bytes.len().saturating_sub(at)))
    })?;
    let scale = maxval as f64;
    let pixels = if width == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
    };
    Image::new(w, pixels)
}

pub fn read_pgm(path: &FsPath) -> Result<Image> {
    parse_pgm(&fs::read(path)?)
}

/// Encodes an image as PGM with the given maxval (255 or 65535 are the
/// usual choices); values are clamped to `[0,1]`.
pub fn encode_pgm(image: &Image, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let side = image.side();
    let mut out = format!("P5\n{side} {side}\n{maxval}\n").into_bytes();
    let q = |v: f64| (v.clamp(0.0, 1.0) * maxval as f64).round() as u16;
    for &v in image.pixels() {
        if maxval < 256 {
            out.push(q(v) as u8);
        } else {
            out.extend_from_slice(&q(v).to_be_bytes());
        }
    }
    out
}

/// 8-bit PGM with 255 on sampled cells.
pub fn encode_mask(mask: &KSpaceMask) -> Vec<u8> {
    let side = mask.side();
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(mask.cells().iter().map(|&c| if c { 255u8 } else { 0 }));
    out
}

fn staging_name(target: &FsPath) -> PathBuf {
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    target.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Writes every file to a temporary sibling first and renames them into
/// place only once all writes succeeded. On failure the temporaries are
/// removed and no target is touched.
pub fn write_all_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[PathBuf]| {
        for tmp in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (target, bytes) in files {
        let tmp = staging_name(target);
        if let Err(e) = fs::write(&tmp, bytes) {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(e.into());
        }
        staged.push(tmp);
    }
    for (tmp, (target, _)) in staged.iter().zip(files) {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged);
            return Err(e.into());
        }
    }
    Ok(())
}
