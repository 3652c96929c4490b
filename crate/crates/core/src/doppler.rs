//! Doppler velocity objective between the infilled up- and down-chirp images.
//!
//! A reflector at true range `r` appears at `r + Δr/2` in the up-chirp image
//! and at `r − Δr/2` in the down-chirp image, with `Δr = β dᵀv`. Querying the
//! up-chirp row at `r_m + Δr` therefore realigns it with the down-chirp row
//! exactly when `v` is the true body velocity.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp_infill::{filter_rows, ChirpImages};
use crate::registration::{beam_dir, DopplerParams, Evaluation, SparseScan};
use crate::types::{Grid, ScanState};

/// Linear interpolation along row `n` at range `r` (metres) and its slope
/// `d/dr`. Bin `m` sits at `m·resolution`; queries outside
/// `[0, (M−1)·resolution]` return zero. At exact bins the slope is the mean
/// of the one-sided slopes.
pub fn row_query(image: &Grid, n: usize, r: f64, resolution: f64) -> (f64, f64) {
    let u = r / resolution;
    let last = image.cols() - 1;
    if !(u >= 0.0 && u <= last as f64) {
        return (0.0, 0.0);
    }
    let row = image.row(n);
    let at = |k: isize| -> f64 {
        if k < 0 || k as usize > last {
            0.0
        } else {
            row[k as usize]
        }
    };
    let k0 = u.floor();
    let f = u - k0;
    let k = k0 as isize;
    let (a, b) = (at(k), at(k + 1));
    let value = a + f * (b - a);
    let mut slope = b - a;
    if f == 0.0 {
        slope = 0.5 * (slope + (a - at(k - 1)));
    }
    (value, slope / resolution)
}

/// Filtered chirp images ready for the Doppler objective.
#[derive(Debug, Clone)]
pub struct DopplerImages {
    pub up: Grid,
    pub down: SparseScan,
    pub azimuths: Vec<f64>,
    pub range_resolution: f64,
}

impl DopplerImages {
    /// Filters both chirp images row-wise and stores the down-chirp image
    /// sparsely.
    pub fn from_chirp_images(images: &ChirpImages, blur_sigma: f64) -> Self {
        Self::from_filtered(
            filter_rows(&images.up, blur_sigma),
            &filter_rows(&images.down, blur_sigma),
            images.azimuths.clone(),
            images.range_resolution,
        )
        .expect("chirp images share a shape")
    }

    pub fn from_filtered(up: Grid, down: &Grid, azimuths: Vec<f64>, range_resolution: f64) -> Result<Self> {
        if !up.same_shape(down) || up.rows() != azimuths.len() {
            return Err(Error::ShapeMismatch(format!(
                "up {}x{}, down {}x{}, {} azimuths",
                up.rows(),
                up.cols(),
                down.rows(),
                down.cols(),
                azimuths.len()
            )));
        }
        Ok(Self {
            up,
            down: SparseScan::from_grid(down),
            azimuths,
            range_resolution,
        })
    }

    /// Same images with the down-chirp values multiplied by `weights`.
    pub fn reweighted(&self, weights: &[f64]) -> Self {
        Self {
            down: self.down.reweighted(weights),
            ..self.clone()
        }
    }
}

/// `Σ ι↓_nm · I↑(n, r_m + Δr_n)` with its gradient. Only the velocity
/// entries of the gradient are non-zero.
pub fn doppler_objective(images: &DopplerImages, state: &ScanState, doppler: &DopplerParams) -> Evaluation {
    let res = images.range_resolution;
    let v = state.v_body;
    let per_row: Vec<(f64, Vector2<f64>)> = (0..images.down.n_rows())
        .into_par_iter()
        .map(|n| {
            let d = beam_dir(images.azimuths[n]);
            let shift = doppler.shift(d, v);
            let mut score = 0.0;
            let mut slope_sum = 0.0;
            for (m, iota) in images.down.row(n) {
                let (val, slope) = row_query(&images.up, n, m as f64 * res + shift, res);
                score += iota * val;
                slope_sum += iota * slope;
            }
            (score, d * (doppler.beta * slope_sum))
        })
        .collect();
    let mut e = Evaluation::zero(state.n_params());
    let vo = state.velocity_offset();
    for (s, g) in per_row {
        e.score += s;
        e.gradient[vo] += g.x;
        e.gradient[vo + 1] += g.y;
    }
    e
}

/// Up-chirp values matched to every stored down-chirp bin (same order), used
/// for robust residuals.
pub fn sample_up_at_bins(images: &DopplerImages, state: &ScanState, doppler: &DopplerParams) -> Vec<f64> {
    let res = images.range_resolution;
    (0..images.down.n_rows())
        .flat_map(|n| {
            let shift = doppler.shift(beam_dir(images.azimuths[n]), state.v_body);
            images
                .down
                .row(n)
                .map(move |(m, _)| row_query(&images.up, n, m as f64 * res + shift, res).0)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Stored down-chirp values in iteration order.
pub fn down_values(images: &DopplerImages) -> Vec<f64> {
    (0..images.down.n_rows())
        .flat_map(|n| images.down.row(n).map(|(_, v)| v).collect::<Vec<_>>())
        .collect()
}
