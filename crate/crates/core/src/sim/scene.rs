//! Simulated worlds: reflectors, motion profile, sensor and noise settings,
//! the shipped presets and the scene file format.
//!
//! A scene file holds `key=value` lines and reflector lines `x_m,y_m,reflectivity`.
//! `speed_wave` / `yaw_wave` take `amplitude,period,phase` and may repeat.
//! Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trajectory::{MotionProfile, Sinusoid};
use crate::error::{Error, Result};
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflector {
    pub position: Vector2<f64>,
    pub reflectivity: f64,
}

/// Chirp pattern of the simulated radar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Alternating up/down chirps, one per azimuth.
    Triangular,
    /// Up-chirps only.
    Sawtooth,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" => Ok(Pattern::Triangular),
            "sawtooth" => Ok(Pattern::Sawtooth),
            o => Err(Error::Scene(format!("unknown pattern '{o}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarParams {
    pub n_azimuths: usize,
    pub n_range_bins: usize,
    pub range_resolution: f64,
    pub scan_period: f64,
    /// Standard deviation of the Gaussian angular beam response (rad).
    pub beam_width: f64,
    /// Standard deviation of the Gaussian range response (bins).
    pub range_psf: f64,
    pub pattern: Pattern,
    pub beta: f64,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            n_azimuths: 400,
            n_range_bins: 2000,
            range_resolution: 0.05,
            scan_period: 0.25,
            beam_width: 0.0157,
            range_psf: 1.0,
            pattern: Pattern::Triangular,
            beta: 0.1,
        }
    }
}

impl RadarParams {
    pub fn max_range(&self) -> f64 {
        (self.n_range_bins - 1) as f64 * self.range_resolution
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Additive Gaussian intensity noise (clamped at zero).
    pub intensity_sigma: f64,
    pub gyro_sigma: f64,
    pub gyro_bias: f64,
    pub gyro_rate_hz: f64,
    /// Lateral body-frame velocity offset seen only by the Doppler shift.
    pub lateral_doppler_bias: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            intensity_sigma: 0.0,
            gyro_sigma: 0.0,
            gyro_bias: 0.0,
            gyro_rate_hz: 100.0,
            lateral_doppler_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub reflectors: Vec<Reflector>,
    pub profile: MotionProfile,
    pub radar: RadarParams,
    pub noise: NoiseParams,
    pub seed: u64,
}

pub const PRESETS: [&str; 3] = ["suburb", "tunnel", "corridor-empty"];

/// Reflectors along the line at `y`. `jitter` perturbs spacing, lateral
/// position and reflectivity; zero gives a perfectly uniform wall.
fn wall(rng: &mut ChaCha8Rng, y: f64, x0: f64, x1: f64, spacing: f64, refl: f64, jitter: f64) -> Vec<Reflector> {
    let n = ((x1 - x0) / spacing).ceil() as usize;
    let mut u = |scale: f64| if jitter > 0.0 { rng.random_range(-jitter..jitter) * scale } else { 0.0 };
    (0..n)
        .map(|i| Reflector {
            position: Vector2::new(x0 + i as f64 * spacing + u(spacing), y + u(0.1)),
            reflectivity: refl * (1.0 + u(0.5)),
        })
        .collect()
}

impl Scene {
    /// Shipped presets; walls of the linear scenes extend past the distance
    /// covered in `duration` seconds.
    pub fn preset(name: &str, duration: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let radar = RadarParams::default();
        let noise = NoiseParams::default();
        let scene = match name {
            "suburb" => {
                let reflectors = (0..200)
                    .map(|_| Reflector {
                        position: Vector2::new(rng.random_range(-75.0..75.0), rng.random_range(-75.0..75.0)),
                        reflectivity: rng.random_range(0.3..1.0),
                    })
                    .collect();
                let profile = MotionProfile {
                    hold: 3.0,
                    ramp: 4.0,
                    yaw_delay: 1.5,
                    speed: 6.0,
                    speed_waves: vec![Sinusoid {
                        amplitude: 1.5,
                        period: 17.0,
                        phase: 0.0,
                    }],
                    yaw_rate: 0.16,
                    yaw_waves: vec![Sinusoid {
                        amplitude: 0.08,
                        period: 13.0,
                        phase: 0.5,
                    }],
                    axle_offset: 0.0,
                    start: Pose2::new(0.0, Vector2::new(0.0, 35.0), 0.0),
                };
                Scene {
                    reflectors,
                    profile,
                    radar,
                    noise,
                    seed,
                }
            }
            "tunnel" | "corridor-empty" => {
                let tunnel = name == "tunnel";
                let mut radar = radar;
                if !tunnel {
                    // Walls visible past the default 200 m map, so the map
                    // holds no along-track edge.
                    radar.n_range_bins = radar.n_range_bins * 3 / 2;
                }
                let speed = if tunnel { 10.0 } else { 15.0 };
                let x_end = (speed + 5.0) * duration + 150.0;
                let (half_width, refl) = if tunnel { (5.0, 0.8) } else { (7.0, 0.4) };
                let (spacing, jitter) = if tunnel { (0.25, 0.2) } else { (0.1, 0.0) };
                let mut reflectors = wall(&mut rng, half_width, -150.0, x_end, spacing, refl, jitter);
                reflectors.extend(wall(&mut rng, -half_width, -150.0, x_end, spacing, refl, jitter));
                if !tunnel {
                    let mut x = -100.0;
                    while x < x_end {
                        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        reflectors.push(Reflector {
                            position: Vector2::new(x + rng.random_range(-20.0..20.0), side * 9.0),
                            reflectivity: 0.6,
                        });
                        x += 600.0;
                    }
                }
                let profile = MotionProfile {
                    hold: 2.0,
                    ramp: 4.0,
                    speed,
                    speed_waves: vec![Sinusoid {
                        amplitude: speed * 0.2,
                        period: 11.0,
                        phase: 0.0,
                    }],
                    ..Default::default()
                };
                Scene {
                    reflectors,
                    profile,
                    radar,
                    noise,
                    seed,
                }
            }
            other => {
                return Err(Error::Scene(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.radar;
        let bad = |m: &str| Err(Error::Scene(m.to_string()));
        if r.n_azimuths < 2 || r.n_range_bins < 2 {
            return bad("need at least 2 azimuths and 2 range bins");
        }
        for (name, v) in [
            ("range_resolution", r.range_resolution),
            ("scan_period", r.scan_period),
            ("beam_width", r.beam_width),
            ("range_psf", r.range_psf),
            ("beta", r.beta),
            ("gyro_rate_hz", self.noise.gyro_rate_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Scene(format!("{name} must be positive")));
            }
        }
        let p = &self.profile;
        if !(p.hold >= 0.0 && p.ramp >= 0.0 && p.yaw_delay >= 0.0) {
            return bad("hold, ramp and yaw_delay must be non-negative");
        }
        if self.noise.intensity_sigma < 0.0 || self.noise.gyro_sigma < 0.0 {
            return bad("noise sigmas must be non-negative");
        }
        if self
            .reflectors
            .iter()
            .any(|f| !f.position.iter().all(|v| v.is_finite()) || f.reflectivity.is_nan() || f.reflectivity < 0.0)
        {
            return bad("reflectors need finite positions and non-negative reflectivity");
        }
        Ok(())
    }

    /// Parses a scene file body on top of the default sensor, noise and an
    /// empty motion profile.
    pub fn from_str_with_seed(text: &str, seed: u64) -> Result<Self> {
        let mut scene = Scene {
            reflectors: Vec::new(),
            profile: MotionProfile::default(),
            radar: RadarParams::default(),
            noise: NoiseParams::default(),
            seed,
        };
        let num = |k: &str, v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Scene(format!("{k}: '{v}' is not a number")))
        };
        let int = |k: &str, v: &str| -> Result<usize> {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Scene(format!("{k}: '{v}' is not an integer")))
        };
        let triple = |k: &str, v: &str| -> Result<[f64; 3]> {
            let p: Vec<&str> = v.split(',').collect();
            if p.len() != 3 {
                return Err(Error::Scene(format!("{k}: expected three values")));
            }
            Ok([num(k, p[0])?, num(k, p[1])?, num(k, p[2])?])
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                let r = triple("reflector", line)
                    .map_err(|_| Error::Scene(format!("line {}: expected key=value or x,y,reflectivity", i + 1)))?;
                scene.reflectors.push(Reflector {
                    position: Vector2::new(r[0], r[1]),
                    reflectivity: r[2],
                });
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            let p = &mut scene.profile;
            match k {
                "n_azimuths" => scene.radar.n_azimuths = int(k, v)?,
                "n_range_bins" => scene.radar.n_range_bins = int(k, v)?,
                "range_resolution" => scene.radar.range_resolution = num(k, v)?,
                "scan_period" => scene.radar.scan_period = num(k, v)?,
                "beam_width" => scene.radar.beam_width = num(k, v)?,
                "range_psf" => scene.radar.range_psf = num(k, v)?,
                "pattern" => scene.radar.pattern = v.parse()?,
                "beta" => scene.radar.beta = num(k, v)?,
                "intensity_noise" => scene.noise.intensity_sigma = num(k, v)?,
                "gyro_noise" => scene.noise.gyro_sigma = num(k, v)?,
                "gyro_bias" => scene.noise.gyro_bias = num(k, v)?,
                "gyro_rate_hz" => scene.noise.gyro_rate_hz = num(k, v)?,
                "lateral_doppler_bias" => scene.noise.lateral_doppler_bias = num(k, v)?,
                "hold" => p.hold = num(k, v)?,
                "ramp" => p.ramp = num(k, v)?,
                "yaw_delay" => p.yaw_delay = num(k, v)?,
                "speed" => p.speed = num(k, v)?,
                "yaw_rate" => p.yaw_rate = num(k, v)?,
                "axle_offset" => p.axle_offset = num(k, v)?,
                "start_x" => p.start.position.x = num(k, v)?,
                "start_y" => p.start.position.y = num(k, v)?,
                "start_theta" => p.start.theta = num(k, v)?,
                "speed_wave" | "yaw_wave" => {
                    let [amplitude, period, phase] = triple(k, v)?;
                    let w = Sinusoid {
                        amplitude,
                        period,
                        phase,
                    };
                    if k == "speed_wave" {
                        p.speed_waves.push(w)
                    } else {
                        p.yaw_waves.push(w)
                    }
                }
                "seed" => scene.seed = v.parse().map_err(|_| Error::Scene("seed: not an integer".into()))?,
                other => return Err(Error::Scene(format!("unknown key '{other}'"))),
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_file(path: &Path, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_with_seed(&text, seed)
    }

    /// Preset name or path to a scene file.
    pub fn load(spec: &str, duration: f64, seed: u64) -> Result<Self> {
        if PRESETS.contains(&spec) {
            Self::preset(spec, duration, seed)
        } else {
            Self::from_file(Path::new(spec), seed)
        }
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let r = &self.radar;
        let p = &self.profile;
        let n = &self.noise;
        let pattern = match r.pattern {
            Pattern::Triangular => "triangular",
            Pattern::Sawtooth => "sawtooth",
        };
        writeln!(s, "n_azimuths={}\nn_range_bins={}", r.n_azimuths, r.n_range_bins).unwrap();
        writeln!(s, "range_resolution={}\nscan_period={}", r.range_resolution, r.scan_period).unwrap();
        writeln!(s, "beam_width={}\nrange_psf={}", r.beam_width, r.range_psf).unwrap();
        writeln!(s, "pattern={pattern}\nbeta={}", r.beta).unwrap();
        writeln!(s, "intensity_noise={}\ngyro_noise={}", n.intensity_sigma, n.gyro_sigma).unwrap();
        writeln!(s, "gyro_bias={}\ngyro_rate_hz={}", n.gyro_bias, n.gyro_rate_hz).unwrap();
        writeln!(s, "lateral_doppler_bias={}", n.lateral_doppler_bias).unwrap();
        writeln!(
            s,
            "hold={}\nramp={}\nyaw_delay={}\nspeed={}\nyaw_rate={}",
            p.hold, p.ramp, p.yaw_delay, p.speed, p.yaw_rate
        ).unwrap();
        writeln!(s, "axle_offset={}", p.axle_offset).unwrap();
        writeln!(
            s,
            "start_x={}\nstart_y={}\nstart_theta={}",
            p.start.position.x, p.start.position.y, p.start.theta
        )
        .unwrap();
        for w in &p.speed_waves {
            writeln!(s, "speed_wave={},{},{}", w.amplitude, w.period, w.phase).unwrap();
        }
        for w in &p.yaw_waves {
            writeln!(s, "yaw_wave={},{},{}", w.amplitude, w.period, w.phase).unwrap();
        }
        for f in &self.reflectors {
            writeln!(s, "{},{},{}", f.position.x, f.position.y, f.reflectivity).unwrap();
        }
        s
    }
}
