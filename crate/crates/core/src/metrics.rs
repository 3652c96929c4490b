//! Trajectory error metrics: KITTI-style relative errors and an SE(2)
//! relative pose error with rigid segment alignment.

use nalgebra::Vector2;

use crate::geometry::{wrap_angle, Pose2};

pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
pub const RPE_LENGTHS: [f64; 4] = [50.0, 100.0, 150.0, 200.0];
pub const SEGMENT_STRIDE: usize = 5;

/// Pose at `t` by linear interpolation of position and shortest-arc
/// interpolation of heading; clamped at the ends.
pub fn interpolate(traj: &[Pose2], t: f64) -> Pose2 {
    assert!(!traj.is_empty(), "empty trajectory");
    if t <= traj[0].timestamp {
        return Pose2 { timestamp: t, ..traj[0] };
    }
    let last = traj[traj.len() - 1];
    if t >= last.timestamp {
        return Pose2 { timestamp: t, ..last };
    }
    let i = traj.partition_point(|p| p.timestamp <= t) - 1;
    let (a, b) = (&traj[i], &traj[i + 1]);
    let f = (t - a.timestamp) / (b.timestamp - a.timestamp);
    Pose2::new(
        a.theta + f * wrap_angle(b.theta - a.theta),
        a.position + (b.position - a.position) * f,
        t,
    )
}

/// `est` resampled at the timestamps of `gt`.
pub fn align_timestamps(est: &[Pose2], gt: &[Pose2]) -> Vec<Pose2> {
    gt.iter().map(|g| interpolate(est, g.timestamp)).collect()
}

fn cumulative_distance(traj: &[Pose2]) -> Vec<f64> {
    let mut d = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    d.push(0.0);
    for w in traj.windows(2) {
        acc += (w[1].position - w[0].position).norm();
        d.push(acc);
    }
    d
}

fn segment_end(dist: &[f64], start: usize, length: f64) -> Option<usize> {
    (start..dist.len()).find(|&j| dist[j] - dist[start] >= length)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KittiResult {
    /// Mean translation error (% of segment length).
    pub translation_pct: f64,
    /// Mean rotation error (degrees per 100 m).
    pub rotation_deg_per_100m: f64,
    pub segments: usize,
}

/// KITTI relative errors over segments of 100–800 m starting every fifth
/// pose. Returns `None` when no segment fits (trajectory under 100 m).
pub fn kitti_errors(est: &[Pose2], gt: &[Pose2]) -> Option<KittiResult> {
    if gt.len() < 2 || est.is_empty() {
        return None;
    }
    let est = align_timestamps(est, gt);
    let dist = cumulative_distance(gt);
    let (mut t_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
    for i in (0..gt.len()).step_by(SEGMENT_STRIDE) {
        for &len in &KITTI_LENGTHS {
            let Some(j) = segment_end(&dist, i, len) else {
                continue;
            };
            let d_gt = gt[i].between(&gt[j]);
            let d_est = est[i].between(&est[j]);
            let err = d_est.between(&d_gt);
            t_sum += err.position.norm() / len;
            r_sum += wrap_angle(err.theta).abs() / len;
            n += 1;
        }
    }
    (n > 0).then(|| KittiResult {
        translation_pct: 100.0 * t_sum / n as f64,
        rotation_deg_per_100m: r_sum.to_degrees() * 100.0 / n as f64,
        segments: n,
    })
}

/// Rotation angle (counter-clockwise convention) and translation that best
/// map `src` onto `dst` in the least-squares sense.
pub fn procrustes_2d(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> (f64, Vector2<f64>) {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector2<f64>>() / n;
    let cd = dst.iter().sum::<Vector2<f64>>() / n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (s, d) = (s - cs, d - cd);
        dot += s.dot(&d);
        cross += s.x * d.y - s.y * d.x;
    }
    let phi = cross.atan2(dot);
    let (sn, c) = phi.sin_cos();
    let rotated = Vector2::new(c * cs.x - sn * cs.y, sn * cs.x + c * cs.y);
    (phi, cd - rotated)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeResult {
    /// Mean over segment lengths of the mean aligned position RMSE (% of length).
    pub percent: f64,
    /// `(length, mean %, segment count)` per length that had segments.
    pub per_length: Vec<(f64, f64, usize)>,
}

/// SE(2) relative pose error: each 50–200 m ground-truth segment (starting
/// every fifth pose) is compared with the rigidly aligned estimate.
pub fn rpe_se2(est: &[Pose2], gt: &[Pose2]) -> Option<RpeResult> {
    if gt.len() < 2 || est.is_empty() {
        return None;
    }
    let est = align_timestamps(est, gt);
    let dist = cumulative_distance(gt);
    let mut per_length = Vec::new();
    for &len in &RPE_LENGTHS {
        let (mut sum, mut n) = (0.0, 0usize);
        for i in (0..gt.len()).step_by(SEGMENT_STRIDE) {
            let Some(j) = segment_end(&dist, i, len) else {
                continue;
            };
            let src: Vec<_> = est[i..=j].iter().map(|p| p.position).collect();
            let dst: Vec<_> = gt[i..=j].iter().map(|p| p.position).collect();
            let (phi, t) = procrustes_2d(&src, &dst);
            let (sn, c) = phi.sin_cos();
            let sq: f64 = src
                .iter()
                .zip(&dst)
                .map(|(s, d)| (Vector2::new(c * s.x - sn * s.y, sn * s.x + c * s.y) + t - d).norm_squared())
                .sum();
            sum += (sq / src.len() as f64).sqrt() / len;
            n += 1;
        }
        if n > 0 {
            per_length.push((len, 100.0 * sum / n as f64, n));
        }
    }
    if per_length.is_empty() {
        return None;
    }
    let percent = per_length.iter().map(|p| p.1).sum::<f64>() / per_length.len() as f64;
    Some(RpeResult { percent, per_length })
}
