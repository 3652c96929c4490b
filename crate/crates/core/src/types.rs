//! Shared domain types: scans, images, gyro streams, per-scan state and the
//! local map.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// Frequency sweep direction of one azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chirp {
    Up,
    Down,
}

impl Chirp {
    /// Sign of the Doppler range offset carried by this chirp: measured
    /// ranges are `r + sign·Δr/2`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Chirp::Up => 1.0,
            Chirp::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Chirp {
        match self {
            Chirp::Up => Chirp::Down,
            Chirp::Down => Chirp::Up,
        }
    }
}

/// Dense row-major `rows × cols` image of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// One 360° polar sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarScan {
    azimuths: Vec<f64>,
    timestamps: Vec<f64>,
    range_resolution: f64,
    n_range_bins: usize,
    intensity: Vec<f32>,
    chirp: Vec<Chirp>,
}

impl RadarScan {
    /// Builds a scan from row-major `intensity` (`azimuths.len() × n_range_bins`).
    pub fn new(
        azimuths: Vec<f64>,
        timestamps: Vec<f64>,
        range_resolution: f64,
        n_range_bins: usize,
        intensity: Vec<f32>,
        chirp: Vec<Chirp>,
    ) -> Result<Self> {
        let n = azimuths.len();
        let bad = |m: String| Err(Error::InvalidScan(m));
        if n < 2 || n_range_bins < 2 {
            return bad(format!("need at least 2x2 bins, got {n}x{n_range_bins}"));
        }
        if timestamps.len() != n || chirp.len() != n {
            return bad("azimuth, timestamp and chirp lengths differ".into());
        }
        if intensity.len() != n * n_range_bins {
            return bad(format!(
                "{} intensities for {n}x{n_range_bins} bins",
                intensity.len()
            ));
        }
        if !(range_resolution.is_finite() && range_resolution > 0.0) {
            return bad("range resolution must be positive".into());
        }
        if azimuths.iter().chain(&timestamps).any(|v| !v.is_finite()) {
            return bad("non-finite azimuth or timestamp".into());
        }
        if azimuths.windows(2).any(|w| w[1] <= w[0]) {
            return bad("azimuths must be strictly increasing".into());
        }
        if azimuths[n - 1] - azimuths[0] >= std::f64::consts::TAU + 1e-9 {
            return bad("azimuths span more than one revolution".into());
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return bad("timestamps must be strictly increasing".into());
        }
        if intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("intensities must be finite and non-negative".into());
        }
        Ok(Self {
            azimuths,
            timestamps,
            range_resolution,
            n_range_bins,
            intensity,
            chirp,
        })
    }

    pub fn n_azimuths(&self) -> usize {
        self.azimuths.len()
    }

    pub fn n_range_bins(&self) -> usize {
        self.n_range_bins
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn range_resolution(&self) -> f64 {
        self.range_resolution
    }

    pub fn chirp(&self) -> &[Chirp] {
        &self.chirp
    }

    pub fn intensity(&self) -> &[f32] {
        &self.intensity
    }

    pub fn intensity_at(&self, n: usize, m: usize) -> f32 {
        self.intensity[n * self.n_range_bins + m]
    }

    /// Range of bin `m` in metres (bin 0 sits at zero range).
    #[inline]
    pub fn range_of_bin(&self, m: usize) -> f64 {
        m as f64 * self.range_resolution
    }

    pub fn first_time(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn last_time(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1]
    }

    /// Mean azimuth period; used to extrapolate the start of the next scan.
    pub fn azimuth_period(&self) -> f64 {
        (self.last_time() - self.first_time()) / (self.n_azimuths() - 1) as f64
    }

    /// `true` when the chirp direction strictly alternates row to row.
    pub fn is_triangular(&self) -> bool {
        self.chirp.windows(2).all(|w| w[0] != w[1])
    }

    /// Intensities widened to `f64`.
    pub fn to_grid(&self) -> Grid {
        Grid {
            rows: self.n_azimuths(),
            cols: self.n_range_bins,
            data: self.intensity.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Per-scan estimation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanState {
    /// Constant angular rate (rad/s); only present without a gyroscope.
    pub omega: Option<f64>,
    /// Body-centric velocity (m/s), constant over the scan.
    pub v_body: Vector2<f64>,
    /// Pose at the scan's first azimuth timestamp.
    pub anchor: Pose2,
}

impl ScanState {
    pub fn new(omega: Option<f64>, v_body: Vector2<f64>, anchor: Pose2) -> Self {
        Self {
            omega,
            v_body,
            anchor,
        }
    }

    /// Number of optimisation variables: `[ω,] vx, vy`.
    pub fn n_params(&self) -> usize {
        if self.omega.is_some() {
            3
        } else {
            2
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self.omega {
            Some(w) => vec![w, self.v_body.x, self.v_body.y],
            None => vec![self.v_body.x, self.v_body.y],
        }
    }

    pub fn with_params(&self, p: &[f64]) -> ScanState {
        let mut s = *self;
        match self.omega {
            Some(_) => {
                s.omega = Some(p[0]);
                s.v_body = Vector2::new(p[1], p[2]);
            }
            None => s.v_body = Vector2::new(p[0], p[1]),
        }
        s
    }

    /// Index of `vx` in the parameter vector.
    pub fn velocity_offset(&self) -> usize {
        usize::from(self.omega.is_some())
    }

    pub fn is_valid(&self, speed_cap: f64) -> bool {
        self.v_body.iter().all(|v| v.is_finite()) && self.v_body.norm() < speed_cap
    }
}

/// Timestamped yaw-rate samples with a tracked bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GyroSeries {
    timestamps: Vec<f64>,
    rates: Vec<f64>,
    pub bias: f64,
}

impl GyroSeries {
    pub fn new(timestamps: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if timestamps.len() != rates.len() {
            return Err(Error::InvalidGyro("timestamp/rate length mismatch".into()));
        }
        if timestamps.len() < 2 {
            return Err(Error::InvalidGyro("need at least two samples".into()));
        }
        if timestamps.iter().chain(&rates).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGyro("non-finite sample".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGyro(
                "timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            timestamps,
            rates,
            bias: 0.0,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn covers(&self, start: f64, end: f64) -> bool {
        self.timestamps[0] <= start && *self.timestamps.last().unwrap() >= end
    }

    /// Raw samples with timestamps in `[start, end)`.
    pub fn window(&self, start: f64, end: f64) -> &[f64] {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t < end);
        &self.rates[lo..hi]
    }

    /// Mean bias-corrected rate over `[start, end]` (trapezoidal on the
    /// piecewise-linear rate).
    pub fn mean_rate(&self, start: f64, end: f64) -> Result<f64> {
        let theta = crate::motion::theta_preint(self, end, start)?;
        Ok(theta / (end - start))
    }
}

/// Cartesian intensity image blended from past corrected scans.
///
/// Pixel `(row i, col j)` has its centre at
/// `origin + (j·resolution, i·resolution)` in the radar frame at `frame_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    pub image: Grid,
    pub origin: Vector2<f64>,
    pub resolution: f64,
    pub frame_time: f64,
}

impl LocalMap {
    /// Empty square map of side `extent` metres centred on the radar.
    pub fn centered(extent: f64, resolution: f64, frame_time: f64) -> Self {
        let size = (extent / resolution).round().max(2.0) as usize;
        let half = (size as f64 - 1.0) * 0.5 * resolution;
        Self {
            image: Grid::zeros(size, size),
            origin: Vector2::new(-half, -half),
            resolution,
            frame_time,
        }
    }

    pub fn width(&self) -> usize {
        self.image.cols()
    }

    pub fn height(&self) -> usize {
        self.image.rows()
    }

    /// Continuous pixel coordinates `(col, row)` of a metric point.
    #[inline]
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin.x) / self.resolution,
            (y - self.origin.y) / self.resolution,
        )
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + col as f64 * self.resolution,
            self.origin.y + row as f64 * self.resolution,
        )
    }
}
