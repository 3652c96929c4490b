//! Estimator configuration and its `key=value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which objectives drive the velocity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Direct intensity registration plus the Doppler objective.
    GD,
    /// Direct intensity registration only.
    G,
    /// Doppler objective only.
    D,
}

impl Mode {
    pub fn uses_intensity(self) -> bool {
        matches!(self, Mode::GD | Mode::G)
    }

    pub fn uses_doppler(self) -> bool {
        matches!(self, Mode::GD | Mode::D)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" | "dg" => Ok(Mode::GD),
            "g" => Ok(Mode::G),
            "d" => Ok(Mode::D),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::GD => "gd",
            Mode::G => "g",
            Mode::D => "d",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Local-map blend factor.
    pub gamma: f64,
    /// Doppler scale: up/down range difference per unit radial velocity (s).
    pub beta: f64,
    pub map_resolution: f64,
    pub map_extent: f64,
    /// GP lengthscales in (azimuth-index, range-bin) units.
    pub gp_lengthscales: (f64, f64),
    pub gp_noise: f64,
    /// GP neighbourhood (azimuth rows, range bins); both odd.
    pub gp_neighborhood: (usize, usize),
    /// Per-row Gaussian blur sigma in range bins.
    pub blur_sigma: f64,
    pub step_init: f64,
    pub step_min: f64,
    pub max_iters: usize,
    /// Acceleration (m/s²) above which the robust re-optimisation runs.
    pub accel_threshold: f64,
    /// Outer reweighting passes of the robust path.
    pub robust_passes: usize,
    pub static_vel_threshold: f64,
    /// Number of static gyro samples averaged to initialise the bias.
    pub gyro_bias_samples: usize,
    pub bias_lowpass_alpha: f64,
    pub vy_bias_lowpass_alpha: f64,
    /// Iteration cap of the Doppler-only solve feeding the lateral bias filter.
    pub doppler_only_iters: usize,
    /// Distance (m) from the radar back to the rear axle along body x.
    pub axle_offset: f64,
    pub speed_cap: f64,
    pub mode: Mode,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            beta: 0.1,
            map_resolution: 0.5,
            map_extent: 200.0,
            gp_lengthscales: (1.0, 1.5),
            gp_noise: 0.1,
            gp_neighborhood: (5, 5),
            blur_sigma: 1.0,
            step_init: 0.1,
            step_min: 1e-4,
            max_iters: 60,
            accel_threshold: 15.0,
            robust_passes: 2,
            static_vel_threshold: 0.05,
            gyro_bias_samples: 100,
            bias_lowpass_alpha: 0.05,
            vy_bias_lowpass_alpha: 0.05,
            doppler_only_iters: 10,
            axle_offset: 0.0,
            speed_cap: 60.0,
            mode: Mode::GD,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_pair<T>(key: &str, v: &str, f: fn(&str, &str) -> Result<T>) -> Result<(T, T)> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("{key}: expected two comma-separated values")));
    }
    Ok((f(key, parts[0])?, f(key, parts[1])?))
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return err("gamma must lie in [0, 1]");
        }
        let positive = [
            ("beta", self.beta),
            ("map_resolution", self.map_resolution),
            ("map_extent", self.map_extent),
            ("gp lengthscale (azimuth)", self.gp_lengthscales.0),
            ("gp lengthscale (range)", self.gp_lengthscales.1),
            ("gp_noise", self.gp_noise),
            ("blur_sigma", self.blur_sigma),
            ("step_init", self.step_init),
            ("step_min", self.step_min),
            ("accel_threshold", self.accel_threshold),
            ("static_vel_threshold", self.static_vel_threshold),
            ("speed_cap", self.speed_cap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, a) in [
            ("bias_lowpass_alpha", self.bias_lowpass_alpha),
            ("vy_bias_lowpass_alpha", self.vy_bias_lowpass_alpha),
        ] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        let (u, v) = self.gp_neighborhood;
        if u % 2 == 0 || v % 2 == 0 {
            return err("gp_neighborhood entries must be odd");
        }
        if self.gyro_bias_samples == 0 {
            return err("gyro_bias_samples must be at least 1");
        }
        if !self.axle_offset.is_finite() {
            return err("axle_offset must be finite");
        }
        Ok(())
    }

    /// Parses `key=value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored; unknown keys are errors.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "gamma" => c.gamma = parse_f64(key, value)?,
                "beta" => c.beta = parse_f64(key, value)?,
                "map_resolution" => c.map_resolution = parse_f64(key, value)?,
                "map_extent" => c.map_extent = parse_f64(key, value)?,
                "gp_lengthscales" => c.gp_lengthscales = parse_pair(key, value, parse_f64)?,
                "gp_noise" => c.gp_noise = parse_f64(key, value)?,
                "gp_neighborhood" => c.gp_neighborhood = parse_pair(key, value, parse_usize)?,
                "blur_sigma" => c.blur_sigma = parse_f64(key, value)?,
                "step_init" => c.step_init = parse_f64(key, value)?,
                "step_min" => c.step_min = parse_f64(key, value)?,
                "max_iters" => c.max_iters = parse_usize(key, value)?,
                "accel_threshold" => c.accel_threshold = parse_f64(key, value)?,
                "robust_passes" => c.robust_passes = parse_usize(key, value)?,
                "static_vel_threshold" => c.static_vel_threshold = parse_f64(key, value)?,
                "gyro_bias_samples" | "q" | "Q" => c.gyro_bias_samples = parse_usize(key, value)?,
                "bias_lowpass_alpha" => c.bias_lowpass_alpha = parse_f64(key, value)?,
                "vy_bias_lowpass_alpha" => c.vy_bias_lowpass_alpha = parse_f64(key, value)?,
                "doppler_only_iters" => c.doppler_only_iters = parse_usize(key, value)?,
                "axle_offset" => c.axle_offset = parse_f64(key, value)?,
                "speed_cap" => c.speed_cap = parse_f64(key, value)?,
                "mode" => c.mode = value.parse()?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("gamma", self.gamma.to_string());
        kv("beta", self.beta.to_string());
        kv("map_resolution", self.map_resolution.to_string());
        kv("map_extent", self.map_extent.to_string());
        kv(
            "gp_lengthscales",
            format!("{},{}", self.gp_lengthscales.0, self.gp_lengthscales.1),
        );
        kv("gp_noise", self.gp_noise.to_string());
        kv(
            "gp_neighborhood",
            format!("{},{}", self.gp_neighborhood.0, self.gp_neighborhood.1),
        );
        kv("blur_sigma", self.blur_sigma.to_string());
        kv("step_init", self.step_init.to_string());
        kv("step_min", self.step_min.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("accel_threshold", self.accel_threshold.to_string());
        kv("robust_passes", self.robust_passes.to_string());
        kv("static_vel_threshold", self.static_vel_threshold.to_string());
        kv("gyro_bias_samples", self.gyro_bias_samples.to_string());
        kv("bias_lowpass_alpha", self.bias_lowpass_alpha.to_string());
        kv("vy_bias_lowpass_alpha", self.vy_bias_lowpass_alpha.to_string());
        kv("doppler_only_iters", self.doppler_only_iters.to_string());
        kv("axle_offset", self.axle_offset.to_string());
        kv("speed_cap", self.speed_cap.to_string());
        kv("mode", self.mode.to_string());
        s
    }
}
