//! Chirp splitting, GP infill of the missing rows, and per-row filtering.
//!
//! Rows of a triangular-pattern scan alternate between up- and down-chirp.
//! Each chirp image keeps its own rows verbatim and infers the others with
//! GP regression restricted to a `U×V` neighbourhood. On the regular grid the
//! regression weights `k(x*, X)(K(X, X) + σ²I)⁻¹` do not depend on the
//! location, so they are solved once and applied as a convolution stencil.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{Chirp, Grid, RadarScan};

/// Squared-exponential kernel over (azimuth-index, range-bin) offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub lengthscales: (f64, f64),
    pub noise: f64,
}

impl KernelParams {
    #[inline]
    pub fn k(&self, da: f64, dr: f64) -> f64 {
        let (la, lr) = self.lengthscales;
        (-0.5 * (da * da / (la * la) + dr * dr / (lr * lr))).exp()
    }
}

/// Regression weights `k(x*, X)(K(X, X) + σ²I)⁻¹` for observations at
/// `points` and a query at `query`.
pub fn gp_weights(points: &[(f64, f64)], query: (f64, f64), kernel: &KernelParams) -> Result<Vec<f64>> {
    let n = points.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let s2 = kernel.noise * kernel.noise;
    let gram = DMatrix::from_fn(n, n, |i, j| {
        let k = kernel.k(points[i].0 - points[j].0, points[i].1 - points[j].1);
        if i == j {
            k + s2
        } else {
            k
        }
    });
    let kstar = DVector::from_fn(n, |i, _| kernel.k(points[i].0 - query.0, points[i].1 - query.1));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Stencil("kernel system is not positive definite".into()))?;
    let w = chol.solve(&kstar);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Stencil("kernel system is numerically singular".into()));
    }
    Ok(w.iter().copied().collect())
}

/// One set of weights over the `U×V` neighbourhood (zero where unobserved).
#[derive(Debug, Clone, PartialEq)]
struct StencilWeights {
    weights: Vec<f64>,
    sum: f64,
}

/// Precomputed GP infill stencil.
///
/// Observed rows sit at odd row offsets from the inferred row. Near the first
/// and last range bins the neighbourhood is truncated; those variants are
/// solved separately so every location matches a direct regression on the
/// same neighbourhood.
#[derive(Debug, Clone)]
pub struct KernelStencil {
    pub neighborhood: (usize, usize),
    pub kernel: KernelParams,
    interior: StencilWeights,
    edges: HashMap<(isize, isize), StencilWeights>,
}

impl KernelStencil {
    fn half(&self) -> (isize, isize) {
        (
            (self.neighborhood.0 / 2) as isize,
            (self.neighborhood.1 / 2) as isize,
        )
    }

    /// Interior weights as a `U×V` grid.
    pub fn weights(&self) -> Grid {
        let (u, v) = self.neighborhood;
        Grid::from_vec(u, v, self.interior.weights.clone()).expect("stencil shape")
    }

    /// Sum of the interior weights (the response to an all-ones input).
    pub fn interior_sum(&self) -> f64 {
        self.interior.sum
    }

    fn solve(
        neighborhood: (usize, usize),
        kernel: &KernelParams,
        col_lo: isize,
        col_hi: isize,
    ) -> Result<StencilWeights> {
        let (u, v) = neighborhood;
        let (hu, hv) = ((u / 2) as isize, (v / 2) as isize);
        let mut points = Vec::new();
        let mut slots = Vec::new();
        for du in -hu..=hu {
            if du.rem_euclid(2) == 0 {
                continue;
            }
            for dv in col_lo..=col_hi {
                points.push((du as f64, dv as f64));
                slots.push(((du + hu) as usize) * v + (dv + hv) as usize);
            }
        }
        let w = gp_weights(&points, (0.0, 0.0), kernel)?;
        let mut weights = vec![0.0; u * v];
        for (slot, wi) in slots.into_iter().zip(&w) {
            weights[slot] = *wi;
        }
        let sum = w.iter().sum();
        Ok(StencilWeights { weights, sum })
    }

    fn variant(&self, m: usize, n_cols: usize) -> (&StencilWeights, isize, isize) {
        let (_, hv) = self.half();
        let lo = (-hv).max(-(m as isize));
        let hi = hv.min(n_cols as isize - 1 - m as isize);
        if lo == -hv && hi == hv {
            (&self.interior, lo, hi)
        } else {
            (&self.edges[&(lo, hi)], lo, hi)
        }
    }

    /// Makes sure the truncated variants needed for `n_cols` range bins exist.
    fn prepare(&mut self, n_cols: usize) -> Result<()> {
        let (_, hv) = self.half();
        for m in 0..n_cols {
            let lo = (-hv).max(-(m as isize));
            let hi = hv.min(n_cols as isize - 1 - m as isize);
            if (lo, hi) != (-hv, hv) && !self.edges.contains_key(&(lo, hi)) {
                let w = Self::solve(self.neighborhood, &self.kernel, lo, hi)?;
                self.edges.insert((lo, hi), w);
            }
        }
        Ok(())
    }

    /// Raw regression output (no shrinkage correction) at `(n, m)` of `src`,
    /// reading rows cyclically. Also returns the stencil's all-ones response.
    pub fn apply_at(&self, src: &Grid, n: usize, m: usize) -> (f64, f64) {
        let (u, v) = self.neighborhood;
        let (hu, hv) = self.half();
        let rows = src.rows() as isize;
        let (w, lo, hi) = self.variant(m, src.cols());
        let mut acc = 0.0;
        for du in -hu..=hu {
            if du.rem_euclid(2) == 0 {
                continue;
            }
            let row = src.row((n as isize + du).rem_euclid(rows) as usize);
            let base = ((du + hu) as usize) * v;
            for dv in lo..=hi {
                acc += w.weights[base + (dv + hv) as usize] * row[(m as isize + dv) as usize];
            }
        }
        debug_assert!(u > 0);
        (acc, w.sum)
    }
}

/// Solves the interior stencil for the given kernel and neighbourhood.
pub fn build_stencil(
    lengthscales: (f64, f64),
    neighborhood: (usize, usize),
    noise: f64,
) -> Result<KernelStencil> {
    let (u, v) = neighborhood;
    if u == 0 || v == 0 || u % 2 == 0 || v % 2 == 0 {
        return Err(Error::Stencil(format!(
            "neighbourhood {u}x{v} must have odd, non-zero sides"
        )));
    }
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::Stencil("noise sigma must be positive".into()));
    }
    if !(lengthscales.0 > 0.0 && lengthscales.1 > 0.0) {
        return Err(Error::Stencil("lengthscales must be positive".into()));
    }
    let kernel = KernelParams { lengthscales, noise };
    let hv = (v / 2) as isize;
    let interior = KernelStencil::solve(neighborhood, &kernel, -hv, hv)?;
    Ok(KernelStencil {
        neighborhood,
        kernel,
        interior,
        edges: HashMap::new(),
    })
}

/// Up- and down-chirp images on the full azimuth grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpImages {
    pub up: Grid,
    pub down: Grid,
    pub azimuths: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub range_resolution: f64,
}

impl ChirpImages {
    pub fn n_rows(&self) -> usize {
        self.up.rows()
    }
}

/// Splits a triangular scan by chirp direction and infers the missing rows
/// of each image. Inferred values are divided by the stencil's all-ones
/// response so a constant input stays constant.
pub fn split_and_infill(scan: &RadarScan, stencil: &KernelStencil) -> Result<ChirpImages> {
    if !scan.is_triangular() {
        return Err(Error::NotTriangular);
    }
    let mut n = scan.n_azimuths();
    if n % 2 == 1 {
        log::warn!("odd number of azimuths ({n}); dropping the last row for chirp splitting");
        n -= 1;
    }
    let m = scan.n_range_bins();
    let full = scan.to_grid();
    let raw = Grid::from_vec(n, m, full.data()[..n * m].to_vec())?;
    let chirp = &scan.chirp()[..n];

    let mut stencil = stencil.clone();
    stencil.prepare(m)?;

    let infill = |keep: Chirp| -> Grid {
        let mut out = Grid::zeros(n, m);
        out.data_mut()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(row, dst)| {
                if chirp[row] == keep {
                    dst.copy_from_slice(raw.row(row));
                } else {
                    for (col, d) in dst.iter_mut().enumerate() {
                        let (acc, sum) = stencil.apply_at(&raw, row, col);
                        *d = if sum > 0.0 { acc / sum } else { 0.0 };
                    }
                }
            });
        out
    };

    Ok(ChirpImages {
        up: infill(Chirp::Up),
        down: infill(Chirp::Down),
        azimuths: scan.azimuths()[..n].to_vec(),
        timestamps: scan.timestamps()[..n].to_vec(),
        range_resolution: scan.range_resolution(),
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn normalize_max(row: &mut [f64]) {
    let max = row.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        row.iter_mut().for_each(|v| *v /= max);
    }
}

/// Filters one row in place: zero bins below twice the row's standard
/// deviation, scale to unit maximum, Gaussian blur, rescale to unit maximum,
/// cube.
pub fn filter_row(row: &mut [f64], blur_sigma: f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let threshold = 2.0 * var.sqrt();
    for v in row.iter_mut() {
        if *v < threshold {
            *v = 0.0;
        }
    }
    normalize_max(row);
    if blur_sigma > 0.0 {
        let k = gaussian_kernel(blur_sigma);
        let r = k.len() / 2;
        let src = row.to_vec();
        for (i, dst) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, w) in k.iter().enumerate() {
                let idx = i as isize + j as isize - r as isize;
                if idx >= 0 && (idx as usize) < src.len() {
                    acc += w * src[idx as usize];
                }
            }
            *dst = acc;
        }
        normalize_max(row);
    }
    for v in row.iter_mut() {
        *v = *v * *v * *v;
    }
}

/// Applies [`filter_row`] to every row; output values lie in `[0, 1]`.
pub fn filter_rows(image: &Grid, blur_sigma: f64) -> Grid {
    let mut out = image.clone();
    let cols = out.cols();
    out.data_mut()
        .par_chunks_mut(cols)
        .for_each(|row| filter_row(row, blur_sigma));
    out
}
