//! Forward sensor models and dataset emission.

use std::path::Path;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scene::{Pattern, Scene};
use super::trajectory::Trajectory;
use crate::dataset::{write_gyro, write_poses, write_scan, write_table, GT_FILE, GYRO_FILE, SCAN_DIR};
use crate::error::{Error, Result};
use crate::geometry::{rotate, wrap_angle, Pose2};
use crate::types::{Chirp, GyroSeries, RadarScan};

/// Reflectors further than this many beam widths off-axis are ignored.
const BEAM_CUTOFF: f64 = 4.0;

fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser over the combined key
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A scene together with its integrated trajectory.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scene: Scene,
    pub trajectory: Trajectory,
}

impl Simulation {
    /// Integrates the trajectory far enough to cover `duration` plus one
    /// extra scan.
    pub fn new(scene: Scene, duration: f64) -> Result<Self> {
        scene.validate()?;
        let trajectory = Trajectory::new(scene.profile.clone(), duration + 2.0 * scene.radar.scan_period)?;
        Ok(Self { scene, trajectory })
    }

    pub fn scan_start(&self, index: usize) -> f64 {
        index as f64 * self.scene.radar.scan_period
    }

    pub fn n_scans(&self, duration: f64) -> usize {
        (duration / self.scene.radar.scan_period + 1e-9).floor() as usize
    }

    /// Displacement-consistent constant body velocity over scan `index`.
    pub fn scan_velocity(&self, index: usize) -> Vector2<f64> {
        self.trajectory
            .effective_velocity(self.scan_start(index), self.scan_start(index + 1))
    }

    pub fn scan(&self, index: usize) -> Result<RadarScan> {
        synth_scan(&self.scene, &self.trajectory, index)
    }
}

/// One revolution starting at `index · scan_period`.
///
/// Each reflector within the beam deposits `reflectivity · exp(−δ²/2w²)` at
/// the measured range `r + σβu/2` (σ = +1 for up-chirps, −1 for down-chirps,
/// `u` the line-of-sight component of the body velocity plus the injected
/// lateral Doppler bias), spread over neighbouring bins by a Gaussian range
/// response.
pub fn synth_scan(scene: &Scene, traj: &Trajectory, index: usize) -> Result<RadarScan> {
    let r = &scene.radar;
    let (n, m) = (r.n_azimuths, r.n_range_bins);
    let t0 = index as f64 * r.scan_period;
    let dt = r.scan_period / n as f64;
    let azimuths: Vec<f64> = (0..n).map(|i| i as f64 * std::f64::consts::TAU / n as f64).collect();
    let timestamps: Vec<f64> = (0..n).map(|i| t0 + i as f64 * dt).collect();
    let chirp: Vec<Chirp> = (0..n)
        .map(|i| match r.pattern {
            Pattern::Triangular if i % 2 == 1 => Chirp::Down,
            _ => Chirp::Up,
        })
        .collect();

    let max_range = r.max_range();
    let centre = traj.pose(t0).position;
    let reach = max_range + 2.0 + r.scan_period * 60.0;
    let nearby: Vec<_> = scene
        .reflectors
        .iter()
        .filter(|f| (f.position - centre).norm() < reach)
        .collect();
    let bias = Vector2::new(0.0, scene.noise.lateral_doppler_bias);
    let noise = (scene.noise.intensity_sigma > 0.0)
        .then(|| Normal::new(0.0, scene.noise.intensity_sigma).expect("finite sigma"));

    let psf_reach = BEAM_CUTOFF * r.range_psf;
    let mut intensity = vec![0.0f32; n * m];
    intensity.par_chunks_mut(m).enumerate().for_each(|(row, dst)| {
        let pose = traj.pose(timestamps[row]);
        let v = traj.body_velocity(timestamps[row]) + bias;
        let sigma = chirp[row].sign();
        let mut acc = vec![0.0f64; m];
        for f in &nearby {
            let q = rotate(-pose.theta, f.position - pose.position);
            let range = q.norm();
            if range > max_range || range == 0.0 {
                continue;
            }
            let off = wrap_angle(q.y.atan2(q.x) - azimuths[row]);
            if off.abs() > BEAM_CUTOFF * r.beam_width {
                continue;
            }
            let gain = f.reflectivity * (-0.5 * off * off / (r.beam_width * r.beam_width)).exp();
            let u = (q / range).dot(&v);
            let measured = (range + 0.5 * sigma * r.beta * u) / r.range_resolution;
            if !(0.0..=(m - 1) as f64).contains(&measured) {
                continue;
            }
            let lo = (measured - psf_reach).ceil().max(0.0) as usize;
            let hi = ((measured + psf_reach).floor() as usize).min(m - 1);
            for (k, a) in acc.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let d = (k as f64 - measured) / r.range_psf;
                *a += gain * (-0.5 * d * d).exp();
            }
        }
        if let Some(dist) = &noise {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(scene.seed, (index as u64) << 20 | row as u64));
            for a in acc.iter_mut() {
                *a = (*a + dist.sample(&mut rng)).max(0.0);
            }
        }
        for (d, a) in dst.iter_mut().zip(&acc) {
            *d = *a as f32;
        }
    });
    RadarScan::new(azimuths, timestamps, r.range_resolution, m, intensity, chirp)
}

/// Gyro samples at `k / rate` for every `k` with `t0 ≤ k / rate ≤ t1`:
/// true yaw rate plus constant bias plus white noise.
pub fn synth_gyro(scene: &Scene, traj: &Trajectory, t0: f64, t1: f64) -> Result<GyroSeries> {
    let rate = scene.noise.gyro_rate_hz;
    let k0 = (t0 * rate - 1e-9).ceil().max(0.0) as u64;
    let k1 = (t1 * rate + 1e-9).floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(scene.seed, u64::MAX));
    let noise = Normal::new(0.0, scene.noise.gyro_sigma.max(0.0)).expect("finite sigma");
    let (mut ts, mut ws) = (Vec::new(), Vec::new());
    for k in k0..=k1 {
        let t = k as f64 / rate;
        let mut w = traj.yaw_rate(t) + scene.noise.gyro_bias;
        if scene.noise.gyro_sigma > 0.0 {
            w += noise.sample(&mut rng);
        }
        ts.push(t);
        ws.push(w);
    }
    GyroSeries::new(ts, ws)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitSummary {
    pub n_scans: usize,
    pub ground_truth: Vec<Pose2>,
    /// Per-scan displacement-consistent body velocity.
    pub velocities: Vec<Vector2<f64>>,
}

/// Writes scans, gyro, ground-truth poses at every scan boundary and
/// per-scan ground-truth velocities (`gt_velocity.csv`) into `out_dir`.
pub fn emit_dataset(scene: &Scene, duration: f64, out_dir: &Path) -> Result<EmitSummary> {
    let sim = Simulation::new(scene.clone(), duration)?;
    let n_scans = sim.n_scans(duration);
    let scan_dir = out_dir.join(SCAN_DIR);
    std::fs::create_dir_all(&scan_dir).map_err(|e| Error::io(&scan_dir, e))?;
    (0..n_scans).into_par_iter().try_for_each(|k| {
        let scan = sim.scan(k)?;
        write_scan(&scan_dir, k, &scan)
    })?;

    let end = sim.scan_start(n_scans) + scene.radar.scan_period;
    let gyro = synth_gyro(scene, &sim.trajectory, 0.0, end)?;
    write_gyro(&out_dir.join(GYRO_FILE), &gyro)?;

    let ground_truth: Vec<Pose2> = (0..=n_scans).map(|k| sim.trajectory.pose(sim.scan_start(k))).collect();
    write_poses(&out_dir.join(GT_FILE), &ground_truth)?;

    let velocities: Vec<Vector2<f64>> = (0..n_scans).map(|k| sim.scan_velocity(k)).collect();
    let rows: Vec<Vec<String>> = velocities
        .iter()
        .enumerate()
        .map(|(k, v)| vec![sim.scan_start(k).to_string(), v.x.to_string(), v.y.to_string()])
        .collect();
    write_table(&out_dir.join("gt_velocity.csv"), &["timestamp_s", "vx_mps", "vy_mps"], &rows)?;
    Ok(EmitSummary {
        n_scans,
        ground_truth,
        velocities,
    })
}
