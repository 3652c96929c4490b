//! Direct intensity registration against a Cartesian local map.
//!
//! Every polar measurement `(a_n, r_m, ι_nm)` is first range-corrected for the
//! Doppler shift of its chirp, then moved into the radar frame at a target
//! time using the scan's continuous motion. During optimisation the target is
//! the scan's first timestamp; for the map update it is the first timestamp
//! of the following scan.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::geometry::{rot, rot_derivative, rotate};
use crate::motion::{MotionModel, MotionSample, RotIntegral};
use crate::types::{Grid, LocalMap, RadarScan, ScanState};

/// Doppler-related warp parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerParams {
    pub beta: f64,
    /// Additive body-frame velocity bias seen by the Doppler shift.
    pub bias: Vector2<f64>,
}

impl DopplerParams {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            bias: Vector2::zeros(),
        }
    }

    /// Range difference `Δr = β dᵀ(v + b)` between up- and down-chirp
    /// returns for beam direction `d`.
    #[inline]
    pub fn shift(&self, d: Vector2<f64>, v_body: Vector2<f64>) -> f64 {
        self.beta * d.dot(&(v_body + self.bias))
    }
}

#[inline]
pub fn beam_dir(azimuth: f64) -> Vector2<f64> {
    let (s, c) = azimuth.sin_cos();
    Vector2::new(c, s)
}

#[inline]
fn pixel(img: &Grid, r: isize, c: isize) -> f64 {
    if r < 0 || c < 0 || r as usize >= img.rows() || c as usize >= img.cols() {
        0.0
    } else {
        img.get(r as usize, c as usize)
    }
}

/// Bilinear map intensity at metric `(x, y)`; pixels outside the map count
/// as zero.
pub fn bilinear(map: &LocalMap, x: f64, y: f64) -> f64 {
    bilinear_grad(map, x, y).0
}

/// Bilinear value and its gradient with respect to `(x, y)`. On pixel
/// boundaries the slope is the mean of the two one-sided slopes.
pub fn bilinear_grad(map: &LocalMap, x: f64, y: f64) -> (f64, Vector2<f64>) {
    let (u, v) = map.to_pixel(x, y);
    let (w, h) = (map.width() as f64, map.height() as f64);
    if !(u > -1.0 && v > -1.0 && u < w && v < h) {
        return (0.0, Vector2::zeros());
    }
    let img = &map.image;
    let (c0, r0) = (u.floor(), v.floor());
    let (fu, fv) = (u - c0, v - r0);
    let (c, r) = (c0 as isize, r0 as isize);
    let p00 = pixel(img, r, c);
    let p01 = pixel(img, r, c + 1);
    let p10 = pixel(img, r + 1, c);
    let p11 = pixel(img, r + 1, c + 1);
    let value = (1.0 - fv) * ((1.0 - fu) * p00 + fu * p01) + fv * ((1.0 - fu) * p10 + fu * p11);
    let mut du = (1.0 - fv) * (p01 - p00) + fv * (p11 - p10);
    let mut dv = (1.0 - fu) * (p10 - p00) + fu * (p11 - p01);
    if fu == 0.0 {
        let left = (1.0 - fv) * (p00 - pixel(img, r, c - 1)) + fv * (p10 - pixel(img, r + 1, c - 1));
        du = 0.5 * (du + left);
    }
    if fv == 0.0 {
        let below = (1.0 - fu) * (p00 - pixel(img, r - 1, c)) + fu * (p01 - pixel(img, r - 1, c + 1));
        dv = 0.5 * (dv + below);
    }
    (value, Vector2::new(du, dv) / map.resolution)
}

/// Relative pose of the radar at one azimuth time, expressed in the frame of
/// the target time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowPose {
    pub theta: f64,
    pub translation: Vector2<f64>,
    /// `∫ rot` mapping `v_b` to the translation (already rotated to target).
    pub integral: RotIntegral,
}

pub(crate) fn row_pose(sample: &MotionSample, target: Option<&MotionSample>, v: Vector2<f64>) -> RowPose {
    match target {
        None => RowPose {
            theta: sample.theta,
            translation: sample.integral.apply(v),
            integral: sample.integral,
        },
        Some(e) => {
            let integral = sample.integral.sub(&e.integral).rotated(-e.theta);
            RowPose {
                theta: sample.theta - e.theta,
                translation: integral.apply(v),
                integral,
            }
        }
    }
}

/// Motion- and Doppler-corrected Cartesian coordinates of every bin, in the
/// radar frame at `target_time`. Row-major `N×M`.
pub fn warp_points(
    scan: &RadarScan,
    state: &ScanState,
    model: &MotionModel,
    doppler: &DopplerParams,
    target_time: f64,
) -> Vec<Vector2<f64>> {
    let m = scan.n_range_bins();
    let target = (target_time != state.anchor.timestamp).then(|| model.evaluate(state, target_time));
    let mut out = vec![Vector2::zeros(); scan.n_azimuths() * m];
    out.par_chunks_mut(m).enumerate().for_each(|(n, dst)| {
        let s = model.evaluate(state, scan.timestamps()[n]);
        let pose = row_pose(&s, target.as_ref(), state.v_body);
        let d = beam_dir(scan.azimuths()[n]);
        let half_shift = 0.5 * scan.chirp()[n].sign() * doppler.shift(d, state.v_body);
        let rd = rotate(pose.theta, d);
        for (k, p) in dst.iter_mut().enumerate() {
            let rho = scan.range_of_bin(k) - half_shift;
            *p = rd * rho + pose.translation;
        }
    });
    out
}

/// Non-zero bins of an intensity grid in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseScan {
    row_ptr: Vec<usize>,
    bins: Vec<u32>,
    values: Vec<f64>,
}

impl SparseScan {
    pub fn from_grid(g: &Grid) -> Self {
        let mut row_ptr = Vec::with_capacity(g.rows() + 1);
        let mut bins = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..g.rows() {
            for (c, &v) in g.row(r).iter().enumerate() {
                if v != 0.0 {
                    bins.push(c as u32);
                    values.push(v);
                }
            }
            row_ptr.push(bins.len());
        }
        Self {
            row_ptr,
            bins,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(bin, value)` pairs of row `n`.
    pub fn row(&self, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[n], self.row_ptr[n + 1]);
        self.bins[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Multiplies every stored value by the matching weight (same order as
    /// iteration); zero products are dropped.
    pub fn reweighted(&self, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), self.values.len());
        let mut row_ptr = vec![0];
        let mut bins = Vec::new();
        let mut values = Vec::new();
        for n in 0..self.n_rows() {
            let span = self.row_ptr[n]..self.row_ptr[n + 1];
            for ((&b, &x), &w) in self.bins[span.clone()].iter().zip(&self.values[span.clone()]).zip(&weights[span]) {
                if x * w != 0.0 {
                    bins.push(b);
                    values.push(x * w);
                }
            }
            row_ptr.push(bins.len());
        }
        Self {
            row_ptr,
            bins,
            values,
        }
    }
}

/// Objective value and gradient with respect to the state parameters
/// (`[ω,] vx, vy`).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    pub gradient: Vec<f64>,
}

impl Evaluation {
    pub fn zero(n_params: usize) -> Self {
        Self {
            score: 0.0,
            gradient: vec![0.0; n_params],
        }
    }

    pub fn add(&mut self, other: &Evaluation) {
        self.score += other.score;
        for (g, o) in self.gradient.iter_mut().zip(&other.gradient) {
            *g += o;
        }
    }
}

/// Cross-correlation `Σ ι_nm · M(x̃_nm)` of the corrected scan with the map
/// (expressed at the scan's first timestamp), with its analytic gradient.
pub fn intensity_objective(
    scan: &RadarScan,
    values: &SparseScan,
    map: &LocalMap,
    state: &ScanState,
    model: &MotionModel,
    doppler: &DopplerParams,
) -> Evaluation {
    let np = state.n_params();
    let vo = state.velocity_offset();
    let v = state.v_body;
    let per_row: Vec<[f64; 4]> = (0..values.n_rows())
        .into_par_iter()
        .map(|n| {
            let mut acc = [0.0; 4];
            let mut it = values.row(n).peekable();
            if it.peek().is_none() {
                return acc;
            }
            let s = model.evaluate(state, scan.timestamps()[n]);
            let pose = row_pose(&s, None, v);
            let d = beam_dir(scan.azimuths()[n]);
            let sigma = scan.chirp()[n].sign();
            let half_shift = 0.5 * sigma * doppler.shift(d, v);
            let rd = rotate(pose.theta, d);
            let mut s0 = Vector2::zeros();
            let mut s1 = Vector2::zeros();
            for (k, iota) in it {
                let rho = scan.range_of_bin(k) - half_shift;
                let p = rd * rho + pose.translation;
                let (b, g) = bilinear_grad(map, p.x, p.y);
                acc[0] += iota * b;
                s0 += g * iota;
                s1 += g * (iota * rho);
            }
            // ∂x̃/∂v_j = −(σβ d_j / 2) R d + column_j(∫rot)
            let common = s0.dot(&rd) * (-0.5 * sigma * doppler.beta);
            acc[2] = common * d.x + s0.dot(&pose.integral.column(0));
            acc[3] = common * d.y + s0.dot(&pose.integral.column(1));
            if vo == 1 {
                let dr = rot_derivative(pose.theta) * d;
                acc[1] = s1.dot(&dr) * s.d_theta + s0.dot(&s.d_integral.apply(v));
            }
            acc
        })
        .collect();
    let mut e = Evaluation::zero(np);
    for a in per_row {
        e.score += a[0];
        if vo == 1 {
            e.gradient[0] += a[1];
        }
        e.gradient[vo] += a[2];
        e.gradient[vo + 1] += a[3];
    }
    e
}

/// Map values sampled at every stored bin of `values` (same order), used
/// for robust residuals.
pub fn sample_map_at_bins(
    scan: &RadarScan,
    values: &SparseScan,
    map: &LocalMap,
    state: &ScanState,
    model: &MotionModel,
    doppler: &DopplerParams,
) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..values.n_rows())
        .into_par_iter()
        .map(|n| {
            let s = model.evaluate(state, scan.timestamps()[n]);
            let pose = row_pose(&s, None, state.v_body);
            let d = beam_dir(scan.azimuths()[n]);
            let half_shift = 0.5 * scan.chirp()[n].sign() * doppler.shift(d, state.v_body);
            let rd = rotate(pose.theta, d);
            values
                .row(n)
                .map(|(k, _)| {
                    let p = rd * (scan.range_of_bin(k) - half_shift) + pose.translation;
                    bilinear(map, p.x, p.y)
                })
                .collect()
        })
        .collect();
    rows.concat()
}

/// Splats points with intensities into an image on `like`'s grid, then
/// normalises each pixel by its accumulated bilinear weight.
pub fn rasterize(like: &LocalMap, points: &[Vector2<f64>], intensity: &[f64]) -> Grid {
    let (h, w) = (like.height(), like.width());
    let mut acc = vec![0.0; h * w];
    let mut wsum = vec![0.0; h * w];
    for (p, &val) in points.iter().zip(intensity) {
        let (u, v) = like.to_pixel(p.x, p.y);
        if !(u > -1.0 && v > -1.0 && u < w as f64 && v < h as f64) {
            continue;
        }
        let (c0, r0) = (u.floor(), v.floor());
        let (fu, fv) = (u - c0, v - r0);
        for (dr, wr) in [(0isize, 1.0 - fv), (1, fv)] {
            for (dc, wc) in [(0isize, 1.0 - fu), (1, fu)] {
                let (r, c) = (r0 as isize + dr, c0 as isize + dc);
                let wt = wr * wc;
                if wt > 0.0 && r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                    let idx = r as usize * w + c as usize;
                    acc[idx] += wt * val;
                    wsum[idx] += wt;
                }
            }
        }
    }
    for (a, s) in acc.iter_mut().zip(&wsum) {
        if *s > 0.0 {
            *a /= s;
        }
    }
    Grid::from_vec(h, w, acc).expect("raster shape")
}

/// Re-expresses `map` in a frame whose pose in the map's frame is
/// `(theta, translation)`; pixels that fall outside the old map become 0.
pub fn resample_map(map: &LocalMap, theta: f64, translation: Vector2<f64>, frame_time: f64) -> LocalMap {
    let r = rot(theta);
    let (h, w) = (map.height(), map.width());
    let mut out = Grid::zeros(h, w);
    out.data_mut().par_chunks_mut(w).enumerate().for_each(|(i, row)| {
        for (j, dst) in row.iter_mut().enumerate() {
            let q = map.pixel_center(i, j);
            let p = r * q + translation;
            *dst = bilinear(map, p.x, p.y);
        }
    });
    LocalMap {
        image: out,
        origin: map.origin,
        resolution: map.resolution,
        frame_time,
    }
}

/// Blends `(1 − γ)·old + γ·new` pixel-wise.
pub fn blend(old: &Grid, new: &Grid, gamma: f64) -> Grid {
    let data = old
        .data()
        .iter()
        .zip(new.data())
        .map(|(a, b)| (1.0 - gamma) * a + gamma * b)
        .collect();
    Grid::from_vec(old.rows(), old.cols(), data).expect("blend shape")
}

/// Geometry of the local map used by [`update_map`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSpec {
    pub extent: f64,
    pub resolution: f64,
    pub gamma: f64,
}

/// Moves the map to `target_time`, rasterises the corrected scan there and
/// blends it in. With no previous map the rasterised scan becomes the map.
#[allow(clippy::too_many_arguments)]
pub fn update_map(
    map: Option<&LocalMap>,
    scan: &RadarScan,
    intensity: &Grid,
    state: &ScanState,
    model: &MotionModel,
    doppler: &DopplerParams,
    spec: &MapSpec,
    target_time: f64,
) -> LocalMap {
    let points = warp_points(scan, state, model, doppler, target_time);
    let mut fresh = LocalMap::centered(spec.extent, spec.resolution, target_time);
    fresh.image = rasterize(&fresh, &points, intensity.data());
    match map {
        None => fresh,
        Some(old) => {
            let e = model.evaluate(state, target_time);
            let moved = resample_map(old, e.theta, e.integral.apply(state.v_body), target_time);
            LocalMap {
                image: blend(&moved.image, &fresh.image, spec.gamma),
                ..fresh
            }
        }
    }
}
