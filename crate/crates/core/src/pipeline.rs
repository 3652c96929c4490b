//! Sequential per-scan estimation over a dataset.

use std::path::Path;

use nalgebra::Vector2;

use crate::bias::{GyroBiasFilter, LateralBiasFilter};
use crate::config::Config;
use crate::dataset::{write_poses, write_table, Dataset};
use crate::doppler::DopplerImages;
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::gp_infill::{build_stencil, filter_rows, split_and_infill, KernelStencil};
use crate::motion::{pose_at, MotionModel, PreintCache};
use crate::registration::{update_map, DopplerParams, MapSpec, SparseScan};
use crate::solver::{optimize, robust_reoptimize, IntensityTerm, Problem, SolverSettings};
use crate::types::{GyroSeries, LocalMap, RadarScan, ScanState};

/// Per-scan outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub timestamp: f64,
    pub state: ScanState,
    pub iterations: usize,
    pub score: f64,
    pub degenerate: bool,
    pub robust_triggered: bool,
    /// The robust re-run still exceeded the acceleration threshold.
    pub robust_violation: bool,
    /// `false` when the scan fell back to the constant-rate model.
    pub used_gyro: bool,
    pub gyro_bias: f64,
    pub vy_bias: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    /// Scan-start poses followed by the pose at the end of the last scan.
    pub poses: Vec<Pose2>,
    pub records: Vec<ScanRecord>,
}

/// Estimator state carried from scan to scan.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: Config,
    settings: SolverSettings,
    stencil: Option<KernelStencil>,
    gyro: Option<GyroSeries>,
    gyro_filter: GyroBiasFilter,
    lateral_filter: LateralBiasFilter,
    map: Option<LocalMap>,
    pose: Pose2,
    previous: Option<ScanState>,
}

impl Pipeline {
    pub fn new(config: Config, gyro: Option<GyroSeries>) -> Result<Self> {
        config.validate()?;
        let stencil = if config.mode.uses_doppler() {
            Some(build_stencil(config.gp_lengthscales, config.gp_neighborhood, config.gp_noise)?)
        } else {
            None
        };
        Ok(Self {
            settings: SolverSettings::from_config(&config),
            gyro_filter: GyroBiasFilter::from_config(&config),
            lateral_filter: LateralBiasFilter::new(config.vy_bias_lowpass_alpha, config.axle_offset),
            stencil,
            gyro,
            map: None,
            pose: Pose2::identity(f64::NAN),
            previous: None,
            config,
        })
    }

    pub fn map(&self) -> Option<&LocalMap> {
        self.map.as_ref()
    }

    pub fn lateral_bias(&self) -> f64 {
        self.lateral_filter.bias
    }

    pub fn gyro_bias(&self) -> f64 {
        self.gyro_filter.bias()
    }

    /// Current pose: the anchor for the next scan.
    pub fn pose(&self) -> Pose2 {
        self.pose
    }

    fn motion_model(&self, t1: f64, t_end: f64) -> MotionModel {
        match &self.gyro {
            Some(g) => match PreintCache::new(g, t1, t_end) {
                Ok(cache) => MotionModel::Gyro(cache),
                Err(e) => {
                    log::warn!("scan at {t1:.3} s: {e}; using the constant-rate model");
                    MotionModel::ConstantRate
                }
            },
            None => MotionModel::ConstantRate,
        }
    }

    /// Estimates one scan. `next_start` is the first timestamp of the
    /// following scan, when known.
    pub fn process(&mut self, scan: &RadarScan, next_start: Option<f64>) -> Result<ScanRecord> {
        let cfg = &self.config;
        if cfg.mode.uses_doppler() && !scan.is_triangular() {
            return Err(Error::Config(format!(
                "mode {} needs a triangular chirp pattern",
                cfg.mode
            )));
        }
        let t1 = scan.first_time();
        let t_end = next_start.unwrap_or(scan.last_time() + scan.azimuth_period());
        let model = self.motion_model(t1, t_end);
        let used_gyro = matches!(model, MotionModel::Gyro(_));
        if self.pose.timestamp.is_nan() {
            self.pose = Pose2::identity(t1);
        }
        let anchor = Pose2 {
            timestamp: t1,
            ..self.pose
        };
        let prev = self.previous;
        let omega = match (&model, prev.and_then(|p| p.omega)) {
            (MotionModel::ConstantRate, Some(w)) => Some(w),
            (MotionModel::ConstantRate, None) => Some(0.0),
            _ => None,
        };
        let init = ScanState::new(omega, prev.map_or(Vector2::zeros(), |p| p.v_body), anchor);

        let filtered = filter_rows(&scan.to_grid(), cfg.blur_sigma);
        let doppler = DopplerParams {
            beta: cfg.beta,
            bias: self.lateral_filter.bias_vector(),
        };
        let images = match &self.stencil {
            Some(st) => Some(DopplerImages::from_chirp_images(
                &split_and_infill(scan, st)?,
                cfg.blur_sigma,
            )),
            None => None,
        };

        let mut record = ScanRecord {
            timestamp: t1,
            state: init,
            iterations: 0,
            score: 0.0,
            degenerate: false,
            robust_triggered: false,
            robust_violation: false,
            used_gyro,
            gyro_bias: self.gyro_filter.bias(),
            vy_bias: self.lateral_filter.bias,
        };

        if let (Some(map), Some(p)) = (&self.map, prev) {
            let problem = Problem {
                intensity: cfg.mode.uses_intensity().then(|| IntensityTerm {
                    scan,
                    values: SparseScan::from_grid(&filtered),
                    map,
                }),
                doppler_images: images.clone(),
                model: &model,
                doppler,
            };
            let mut result = optimize(&problem, &init, &self.settings);
            let dt = (t1 - p.anchor.timestamp).max(f64::EPSILON);
            let accel = |s: &ScanState| (s.v_body - p.v_body).norm() / dt;
            if accel(&result.state) > cfg.accel_threshold {
                log::info!(
                    "scan at {t1:.3} s: acceleration {:.1} m/s² over threshold; robust re-run",
                    accel(&result.state)
                );
                result = robust_reoptimize(&problem, &init, &self.settings, cfg.robust_passes);
                record.robust_triggered = true;
                record.robust_violation = accel(&result.state) > cfg.accel_threshold;
            }
            record.state = result.state;
            record.iterations = result.iterations;
            record.score = result.score;
            record.degenerate = result.degenerate;

            if let Some(im) = &images {
                let doppler_only = Problem {
                    intensity: None,
                    doppler_images: Some(im.clone()),
                    model: &model,
                    doppler: DopplerParams::new(cfg.beta),
                };
                let settings = SolverSettings {
                    max_iters: cfg.doppler_only_iters,
                    ..self.settings
                };
                let v_d = optimize(&doppler_only, &record.state, &settings).state.v_body;
                let rate = match record.state.omega {
                    Some(w) => w,
                    None => self
                        .gyro
                        .as_ref()
                        .and_then(|g| g.mean_rate(t1, t_end).ok())
                        .unwrap_or(0.0),
                };
                self.lateral_filter.update(v_d, rate);
            }
            if let Some(g) = &mut self.gyro {
                let window = g.window(t1, t_end).to_vec();
                g.bias = self.gyro_filter.update(&window, record.state.v_body);
            }
        }
        record.gyro_bias = self.gyro_filter.bias();
        record.vy_bias = self.lateral_filter.bias;

        let spec = MapSpec {
            extent: cfg.map_extent,
            resolution: cfg.map_resolution,
            gamma: cfg.gamma,
        };
        self.map = Some(update_map(
            self.map.as_ref(),
            scan,
            &filtered,
            &record.state,
            &model,
            &doppler,
            &spec,
            t_end,
        ));
        self.pose = pose_at(&record.state, &model, t_end);
        self.previous = Some(record.state);
        Ok(record)
    }
}

/// Runs the estimator over every scan of `dataset`.
pub fn run(dataset: &Dataset, config: &Config) -> Result<RunOutput> {
    if dataset.is_empty() {
        log::warn!("dataset {} has no scans", dataset.root.display());
    }
    run_scans(dataset.len(), dataset.gyro.clone(), config, |i| dataset.scan(i))
}

/// Runs the estimator over `n` scans produced in order by `load`.
pub fn run_scans<F>(n: usize, gyro: Option<GyroSeries>, config: &Config, mut load: F) -> Result<RunOutput>
where
    F: FnMut(usize) -> Result<RadarScan>,
{
    let mut out = RunOutput::default();
    if n == 0 {
        return Ok(out);
    }
    let mut pipeline = Pipeline::new(config.clone(), gyro)?;
    let mut next = Some(load(0)?);
    for i in 0..n {
        let scan = next.take().expect("scan loaded");
        next = if i + 1 < n { Some(load(i + 1)?) } else { None };
        let record = pipeline.process(&scan, next.as_ref().map(RadarScan::first_time))?;
        log::debug!(
            "scan {i}: v=({:.3}, {:.3}) iters={} robust={}",
            record.state.v_body.x,
            record.state.v_body.y,
            record.iterations,
            record.robust_triggered
        );
        out.poses.push(record.state.anchor);
        out.records.push(record);
    }
    out.poses.push(pipeline.pose());
    Ok(out)
}

/// Writes `poses.csv`, `biases.csv` and `diag.csv` into `out_dir`.
pub fn write_outputs(out_dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_poses(&out_dir.join("poses.csv"), &out.poses)?;
    let biases: Vec<Vec<String>> = out
        .records
        .iter()
        .map(|r| vec![r.timestamp.to_string(), r.gyro_bias.to_string(), r.vy_bias.to_string()])
        .collect();
    write_table(&out_dir.join("biases.csv"), &["timestamp_s", "gyro_bias", "vy_bias"], &biases)?;
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let diag: Vec<Vec<String>> = out
        .records
        .iter()
        .map(|r| {
            vec![
                r.timestamp.to_string(),
                r.iterations.to_string(),
                r.score.to_string(),
                flag(r.robust_triggered),
                flag(r.robust_violation),
                flag(r.degenerate),
                flag(r.used_gyro),
                r.state.v_body.x.to_string(),
                r.state.v_body.y.to_string(),
                r.state.omega.map_or(String::new(), |w| w.to_string()),
            ]
        })
        .collect();
    write_table(
        &out_dir.join("diag.csv"),
        &[
            "timestamp_s",
            "iterations",
            "score",
            "robust_triggered",
            "robust_violation",
            "degenerate",
            "gyro",
            "vx_mps",
            "vy_mps",
            "omega_rad_s",
        ],
        &diag,
    )
}
