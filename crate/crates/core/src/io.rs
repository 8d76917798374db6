//! Binary matrix dumps, JSON manifests and the bundle cache.
//!
//! A dump is a 32-byte header followed by the entries in row-major order as
//! little-endian interleaved `(re, im)` f64 pairs. Header layout:
//! `n: u64 | L: f64 | checksum: u64 | rows: u32 | cols: u32`, where `n`, `L`
//! describe the spatial grid and the checksum is the first 8 bytes of the
//! SHA-256 of the payload, read as a little-endian u64.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridOperator, SpatialGrid};
use crate::linalg::{self, CMat};
use crate::parametrix::ParametrixBundle;
use crate::states::TwoPointFunction;

pub const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixHeader {
    pub n: u64,
    pub length: f64,
    pub checksum: u64,
    pub rows: u32,
    pub cols: u32,
}

pub fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn encode_matrix(grid: &SpatialGrid, m: &CMat) -> Vec<u8> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut payload = Vec::with_capacity(rows * cols * 16);
    for i in 0..rows {
        for j in 0..cols {
            let v = m[(i, j)];
            payload.extend_from_slice(&v.re.to_le_bytes());
            payload.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    out.extend_from_slice(&grid.length().to_le_bytes());
    out.extend_from_slice(&checksum(&payload).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("slice of 8"))
}

fn read_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("slice of 8"))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(MatrixHeader, CMat)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("dump of {} bytes is shorter than the header", bytes.len())));
    }
    let rows = u32::from_le_bytes(bytes[24..28].try_into().expect("slice of 4"));
    let cols = u32::from_le_bytes(bytes[28..32].try_into().expect("slice of 4"));
    let header = MatrixHeader { n: read_u64(bytes, 0), length: read_f64(bytes, 8), checksum: read_u64(bytes, 16), rows, cols };
    let payload = &bytes[HEADER_LEN..];
    let expected = rows as usize * cols as usize * 16;
    if payload.len() != expected {
        return Err(Error::Format(format!("payload has {} bytes, header implies {expected}", payload.len())));
    }
    let sum = checksum(payload);
    if sum != header.checksum {
        return Err(Error::Format(format!("checksum mismatch: stored {:016x}, computed {sum:016x}", header.checksum)));
    }
    let m = CMat::from_fn(rows as usize, cols as usize, |i, j| {
        let at = 16 * (i * cols as usize + j);
        C64::new(read_f64(payload, at), read_f64(payload, at + 8))
    });
    Ok((header, m))
}

pub fn write_matrix(path: &Path, grid: &SpatialGrid, m: &CMat) -> Result<u64> {
    let bytes = encode_matrix(grid, m);
    fs::write(path, &bytes)?;
    Ok(read_u64(&bytes, 16))
}

pub fn read_matrix(path: &Path) -> Result<(MatrixHeader, CMat)> {
    decode_matrix(&fs::read(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridInfo {
    pub n: usize,
    pub length: f64,
}

impl GridInfo {
    pub fn of(grid: &SpatialGrid) -> Self {
        Self { n: grid.n(), length: grid.length() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WindowInfo {
    pub t_max: f64,
    pub nodes: usize,
}

/// `manifest.json` of a bundle cache; `files` maps names to hex checksums.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BundleManifest {
    pub grid: GridInfo,
    pub window: WindowInfo,
    pub truncation: usize,
    pub r_cutoff: f64,
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

fn write_set(dir: &Path, grid: &SpatialGrid, mats: &[(&str, &CMat)]) -> Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for (name, m) in mats {
        let file = format!("{name}.bin");
        let sum = write_matrix(&dir.join(&file), grid, m)?;
        files.insert(file, format!("{sum:016x}"));
    }
    Ok(files)
}

fn read_checked(dir: &Path, files: &BTreeMap<String, String>, name: &str, grid: &GridInfo) -> Result<CMat> {
    let file = format!("{name}.bin");
    let want = files.get(&file).ok_or_else(|| Error::Format(format!("manifest lists no {file}")))?;
    let (h, m) = read_matrix(&dir.join(&file))?;
    if &format!("{:016x}", h.checksum) != want {
        return Err(Error::Format(format!("{file}: checksum differs from manifest")));
    }
    if h.n as usize != grid.n || h.length != grid.length {
        return Err(Error::Format(format!("{file}: grid ({}, {}) differs from manifest", h.n, h.length)));
    }
    Ok(m)
}

/// Writes `r`, `d±`, `T`, `T⁻¹`, `E(0)`, `B(0)` and the manifest.
pub fn write_bundle_cache(dir: &Path, bundle: &ParametrixBundle) -> Result<BundleManifest> {
    let grid = bundle.grid();
    let files = write_set(
        dir,
        grid,
        &[
            ("r", bundle.r().mat()),
            ("d_plus", bundle.d_plus().mat()),
            ("d_minus", bundle.d_minus().mat()),
            ("t", bundle.t()),
            ("t_inv", bundle.t_inv()),
            ("e0", bundle.e0().mat()),
            ("b0", bundle.b0().mat()),
        ],
    )?;
    let opts = bundle.options();
    let manifest = BundleManifest {
        grid: GridInfo::of(grid),
        window: WindowInfo { t_max: opts.t_max, nodes: opts.window_nodes },
        truncation: opts.truncation,
        r_cutoff: bundle.cutoff().radius,
        files,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reads `r` back from a cache, verifying checksums against the manifest.
pub fn read_cached_r(dir: &Path) -> Result<(BundleManifest, GridOperator)> {
    let manifest: BundleManifest = read_json(&dir.join(MANIFEST))?;
    let grid = SpatialGrid::new(manifest.grid.n, manifest.grid.length)?;
    let r = read_checked(dir, &manifest.files, "r", &manifest.grid)?;
    Ok((manifest.clone(), GridOperator::new(&grid, r)?))
}

/// Checks every file listed in a cache manifest.
pub fn verify_cache(dir: &Path) -> Result<BundleManifest> {
    let manifest: BundleManifest = read_json(&dir.join(MANIFEST))?;
    for file in manifest.files.keys() {
        let name = file.trim_end_matches(".bin");
        read_checked(dir, &manifest.files, name, &manifest.grid)?;
    }
    Ok(manifest)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StateManifest {
    pub grid: GridInfo,
    pub name: String,
    pub files: BTreeMap<String, String>,
}

/// Writes the four blocks of `λ` as `{name}_pp`, `_pm`, `_mp`, `_mm`.
pub fn write_state(dir: &Path, name: &str, lam: &TwoPointFunction) -> Result<StateManifest> {
    let grid = lam.grid();
    let blocks: Vec<(String, CMat)> =
        [("pp", 0, 0), ("pm", 0, 1), ("mp", 1, 0), ("mm", 1, 1)].iter().map(|(s, i, j)| (format!("{name}_{s}"), linalg::block(lam.lambda(), *i, *j))).collect();
    let refs: Vec<(&str, &CMat)> = blocks.iter().map(|(s, m)| (s.as_str(), m)).collect();
    let files = write_set(dir, grid, &refs)?;
    let manifest = StateManifest { grid: GridInfo::of(grid), name: name.into(), files };
    write_json(&dir.join(format!("{name}.json")), &manifest)?;
    Ok(manifest)
}

pub fn read_state(dir: &Path, name: &str) -> Result<TwoPointFunction> {
    let manifest: StateManifest = read_json(&dir.join(format!("{name}.json")))?;
    let grid = SpatialGrid::new(manifest.grid.n, manifest.grid.length)?;
    let get = |s: &str| read_checked(dir, &manifest.files, &format!("{name}_{s}"), &manifest.grid);
    let lam = linalg::block2(&get("pp")?, &get("pm")?, &get("mp")?, &get("mm")?);
    TwoPointFunction::new(&grid, lam)
}
