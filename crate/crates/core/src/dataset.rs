//! On-disk dataset layout.
//!
//! ```text
//! <dir>/scans/000000.bin    row-major N×M f32 little-endian intensities
//! <dir>/scans/000000.meta   key=value: n_azimuths, n_range_bins,
//!                           range_resolution_m, azimuths_rad, timestamps_s,
//!                           chirp_up (comma-separated 0/1)
//! <dir>/gyro.csv            timestamp_s,omega_rad_s
//! <dir>/gt_poses.csv        timestamp_s,x_m,y_m,theta_rad
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::types::{Chirp, GyroSeries, RadarScan};

pub const SCAN_DIR: &str = "scans";
pub const GYRO_FILE: &str = "gyro.csv";
pub const GT_FILE: &str = "gt_poses.csv";

fn join_f64(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes `scan` as `<scan_dir>/<index:06>.{bin,meta}`.
pub fn write_scan(scan_dir: &Path, index: usize, scan: &RadarScan) -> Result<()> {
    fs::create_dir_all(scan_dir).map_err(|e| Error::io(scan_dir, e))?;
    let stem = format!("{index:06}");
    let mut bin = Vec::with_capacity(scan.intensity().len() * 4);
    for v in scan.intensity() {
        bin.extend_from_slice(&v.to_le_bytes());
    }
    write_file(&scan_dir.join(format!("{stem}.bin")), &bin)?;

    let chirp: Vec<&str> = scan
        .chirp()
        .iter()
        .map(|c| if *c == Chirp::Up { "1" } else { "0" })
        .collect();
    let meta = format!(
        "n_azimuths={}\nn_range_bins={}\nrange_resolution_m={}\nazimuths_rad={}\ntimestamps_s={}\nchirp_up={}\n",
        scan.n_azimuths(),
        scan.n_range_bins(),
        scan.range_resolution(),
        join_f64(scan.azimuths()),
        join_f64(scan.timestamps()),
        chirp.join(","),
    );
    write_file(&scan_dir.join(format!("{stem}.meta")), meta.as_bytes())
}

fn parse_list<T: std::str::FromStr>(path: &Path, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::parse(path, format!("{key}: bad value '{s}'")))
        })
        .collect()
}

/// Reads the scan stored at `<stem>.bin` / `<stem>.meta`; `bin_path` may
/// point at either file.
pub fn read_scan(bin_path: &Path) -> Result<RadarScan> {
    let bin_path = bin_path.with_extension("bin");
    let meta_path = bin_path.with_extension("meta");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut kv = HashMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&meta_path, format!("expected key=value, got '{line}'")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::parse(&meta_path, format!("missing key '{k}'")))
    };
    let n: usize = get("n_azimuths")?
        .parse()
        .map_err(|_| Error::parse(&meta_path, "bad n_azimuths"))?;
    let m: usize = get("n_range_bins")?
        .parse()
        .map_err(|_| Error::parse(&meta_path, "bad n_range_bins"))?;
    let res: f64 = get("range_resolution_m")?
        .parse()
        .map_err(|_| Error::parse(&meta_path, "bad range_resolution_m"))?;
    let azimuths: Vec<f64> = parse_list(&meta_path, "azimuths_rad", get("azimuths_rad")?)?;
    let timestamps: Vec<f64> = parse_list(&meta_path, "timestamps_s", get("timestamps_s")?)?;
    let chirp_flags: Vec<u8> = parse_list(&meta_path, "chirp_up", get("chirp_up")?)?;
    if azimuths.len() != n || timestamps.len() != n || chirp_flags.len() != n {
        return Err(Error::parse(&meta_path, "per-azimuth lists do not match n_azimuths"));
    }
    let chirp = chirp_flags
        .iter()
        .map(|f| match f {
            1 => Ok(Chirp::Up),
            0 => Ok(Chirp::Down),
            _ => Err(Error::parse(&meta_path, "chirp_up entries must be 0 or 1")),
        })
        .collect::<Result<Vec<_>>>()?;

    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() != n * m * 4 {
        return Err(Error::parse(
            &bin_path,
            format!("expected {} bytes, found {}", n * m * 4, bytes.len()),
        ));
    }
    let intensity = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    RadarScan::new(azimuths, timestamps, res, m, intensity, chirp)
}

/// Sorted scan stems found in `<dir>/scans`.
pub fn list_scans(dir: &Path) -> Result<Vec<PathBuf>> {
    let scan_dir = dir.join(SCAN_DIR);
    let entries = fs::read_dir(&scan_dir).map_err(|e| Error::io(&scan_dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&scan_dir, e))?.path();
        if path.extension().is_some_and(|e| e == "bin") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_csv_rows(path: &Path, cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, format!("line {}: not numeric", i + 1)))?;
        if vals.len() != cols {
            return Err(Error::parse(
                path,
                format!("line {}: expected {cols} columns, found {}", i + 1, vals.len()),
            ));
        }
        rows.push(vals);
    }
    Ok(rows)
}

pub fn write_gyro(path: &Path, gyro: &GyroSeries) -> Result<()> {
    let mut s = String::from("timestamp_s,omega_rad_s\n");
    for (t, w) in gyro.timestamps().iter().zip(gyro.rates()) {
        writeln!(s, "{t},{w}").unwrap();
    }
    write_file(path, s.as_bytes())
}

pub fn read_gyro(path: &Path) -> Result<GyroSeries> {
    let rows = read_csv_rows(path, 2)?;
    let (ts, ws) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    GyroSeries::new(ts, ws)
}

pub fn write_poses(path: &Path, poses: &[Pose2]) -> Result<()> {
    let mut s = String::from("timestamp_s,x_m,y_m,theta_rad\n");
    for p in poses {
        writeln!(s, "{},{},{},{}", p.timestamp, p.position.x, p.position.y, p.theta).unwrap();
    }
    write_file(path, s.as_bytes())
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose2>> {
    Ok(read_csv_rows(path, 4)?
        .into_iter()
        .map(|r| Pose2::new(r[3], Vector2::new(r[1], r[2]), r[0]))
        .collect())
}

/// Generic CSV writer for logs: header plus rows of already formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

/// A dataset directory. Scans are loaded on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub scan_paths: Vec<PathBuf>,
    pub gyro: Option<GyroSeries>,
    pub ground_truth: Option<Vec<Pose2>>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Dataset(format!("{} is not a directory", root.display())));
        }
        let scan_paths = if root.join(SCAN_DIR).is_dir() {
            list_scans(root)?
        } else {
            Vec::new()
        };
        for (i, p) in scan_paths.iter().enumerate() {
            let expected = format!("{i:06}.bin");
            if p.file_name().and_then(|f| f.to_str()) != Some(expected.as_str()) {
                return Err(Error::Dataset(format!(
                    "scan sequence has a gap: expected {expected}, found {}",
                    p.display()
                )));
            }
        }
        let gyro_path = root.join(GYRO_FILE);
        let gyro = gyro_path.is_file().then(|| read_gyro(&gyro_path)).transpose()?;
        let gt_path = root.join(GT_FILE);
        let ground_truth = gt_path.is_file().then(|| read_poses(&gt_path)).transpose()?;
        Ok(Self {
            root: root.to_path_buf(),
            scan_paths,
            gyro,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.scan_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan_paths.is_empty()
    }

    pub fn scan(&self, i: usize) -> Result<RadarScan> {
        read_scan(&self.scan_paths[i])
    }
}
