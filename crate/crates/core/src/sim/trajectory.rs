//! Ground-truth vehicle motion for the simulator.
//!
//! A kinematic profile gives the rear-axle forward speed and the yaw rate as
//! smooth functions of time (a hold, a raised-cosine ramp, then a base value
//! plus sinusoids). The radar sits `axle_offset` metres ahead of the axle, so
//! its body-frame velocity is `(speed, −ω·axle_offset)`. The radar pose is
//! integrated with RK4 on a fine grid; queries between checkpoints take one
//! RK4 step from the preceding checkpoint.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{rate_cross, rotate, Pose2};

/// `amplitude · sin(2π t / period + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl Sinusoid {
    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * t / self.period + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile {
    /// Time spent stationary at the start (s).
    pub hold: f64,
    /// Duration of the raised-cosine ramp from rest to the full profile (s).
    pub ramp: f64,
    /// Extra time after the hold before turning starts (s).
    pub yaw_delay: f64,
    pub speed: f64,
    pub speed_waves: Vec<Sinusoid>,
    pub yaw_rate: f64,
    pub yaw_waves: Vec<Sinusoid>,
    /// Distance from the rear axle forward to the radar (m).
    pub axle_offset: f64,
    pub start: Pose2,
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self {
            hold: 0.0,
            ramp: 0.0,
            yaw_delay: 0.0,
            speed: 0.0,
            speed_waves: Vec::new(),
            yaw_rate: 0.0,
            yaw_waves: Vec::new(),
            axle_offset: 0.0,
            start: Pose2::identity(0.0),
        }
    }
}

impl MotionProfile {
    fn envelope(&self, t: f64, start: f64) -> f64 {
        if t < start {
            0.0
        } else if self.ramp <= 0.0 || t >= start + self.ramp {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * (t - start) / self.ramp).cos())
        }
    }

    /// Rear-axle forward speed (m/s).
    pub fn axle_speed(&self, t: f64) -> f64 {
        self.envelope(t, self.hold) * (self.speed + self.speed_waves.iter().map(|w| w.eval(t)).sum::<f64>())
    }

    /// Yaw rate (rad/s) under the crate's rotation convention.
    pub fn yaw_rate(&self, t: f64) -> f64 {
        self.envelope(t, self.hold + self.yaw_delay) * (self.yaw_rate + self.yaw_waves.iter().map(|w| w.eval(t)).sum::<f64>())
    }

    /// Radar velocity in its own frame.
    pub fn radar_velocity(&self, t: f64) -> Vector2<f64> {
        let lever = Vector2::new(self.axle_offset, 0.0);
        Vector2::new(self.axle_speed(t), 0.0) + rate_cross(self.yaw_rate(t), lever)
    }

    fn derivative(&self, t: f64, s: &[f64; 3]) -> [f64; 3] {
        let v = rotate(s[2], self.radar_velocity(t));
        [v.x, v.y, self.yaw_rate(t)]
    }

    fn rk4(&self, t: f64, s: &[f64; 3], h: f64) -> [f64; 3] {
        let add = |a: &[f64; 3], k: &[f64; 3], f: f64| [a[0] + f * k[0], a[1] + f * k[1], a[2] + f * k[2]];
        let k1 = self.derivative(t, s);
        let k2 = self.derivative(t + 0.5 * h, &add(s, &k1, 0.5 * h));
        let k3 = self.derivative(t + 0.5 * h, &add(s, &k2, 0.5 * h));
        let k4 = self.derivative(t + h, &add(s, &k3, h));
        let mut out = *s;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

/// Integrated radar trajectory over `[0, duration]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub profile: MotionProfile,
    step: f64,
    checkpoints: Vec<[f64; 3]>,
}

impl Trajectory {
    pub const STEP: f64 = 0.005;

    pub fn new(profile: MotionProfile, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::Scene("duration must be non-negative".into()));
        }
        let step = Self::STEP;
        let n = (duration / step).ceil() as usize + 2;
        let s0 = [profile.start.position.x, profile.start.position.y, profile.start.theta];
        let mut checkpoints = Vec::with_capacity(n);
        checkpoints.push(s0);
        for k in 0..n - 1 {
            let next = profile.rk4(k as f64 * step, &checkpoints[k], step);
            checkpoints.push(next);
        }
        Ok(Self {
            profile,
            step,
            checkpoints,
        })
    }

    pub fn duration(&self) -> f64 {
        (self.checkpoints.len() - 1) as f64 * self.step
    }

    /// World-from-radar pose at `t` (clamped to the integrated span).
    pub fn pose(&self, t: f64) -> Pose2 {
        let t = t.clamp(0.0, self.duration());
        let k = ((t / self.step).floor() as usize).min(self.checkpoints.len() - 2);
        let tk = k as f64 * self.step;
        let s = if t == tk {
            self.checkpoints[k]
        } else {
            self.profile.rk4(tk, &self.checkpoints[k], t - tk)
        };
        Pose2::new(s[2], Vector2::new(s[0], s[1]), t)
    }

    pub fn body_velocity(&self, t: f64) -> Vector2<f64> {
        self.profile.radar_velocity(t)
    }

    pub fn yaw_rate(&self, t: f64) -> f64 {
        self.profile.yaw_rate(t)
    }

    /// Constant body velocity that reproduces the true displacement over
    /// `[t1, t2]` under the true heading, `(∫ rot(θ(s) − θ(t₁)) ds)⁻¹ R₁ᵀ Δp`.
    pub fn effective_velocity(&self, t1: f64, t2: f64) -> Vector2<f64> {
        let p1 = self.pose(t1);
        let p2 = self.pose(t2);
        let n = 200;
        let h = (t2 - t1) / n as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let (s, c) = (self.pose(t1 + i as f64 * h).theta - p1.theta).sin_cos();
            a += w * c;
            b += w * s;
        }
        a *= h / 3.0;
        b *= h / 3.0;
        let d = rotate(-p1.theta, p2.position - p1.position);
        // [[a, b], [-b, a]]⁻¹ = [[a, -b], [b, a]] / (a² + b²)
        Vector2::new(a * d.x - b * d.y, b * d.x + a * d.y) / (a * a + b * b)
    }
}
