//! Online gyro-bias and lateral Doppler-bias estimation.

use nalgebra::Vector2;

use crate::geometry::rate_cross;

/// Gyro bias from static periods.
///
/// Until initialised, raw samples are collected while the platform is
/// static; the first `q` consecutive static samples set the bias. Afterwards
/// every static window nudges the bias with a first-order low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GyroBiasFilter {
    q: usize,
    alpha: f64,
    static_threshold: f64,
    pending: Vec<f64>,
    bias: Option<f64>,
}

impl GyroBiasFilter {
    pub fn new(q: usize, alpha: f64, static_threshold: f64) -> Self {
        Self {
            q: q.max(1),
            alpha,
            static_threshold,
            pending: Vec::new(),
            bias: None,
        }
    }

    pub fn from_config(c: &crate::Config) -> Self {
        Self::new(c.gyro_bias_samples, c.bias_lowpass_alpha, c.static_vel_threshold)
    }

    /// Current estimate (zero until initialised).
    pub fn bias(&self) -> f64 {
        self.bias.unwrap_or(0.0)
    }

    pub fn is_initialized(&self) -> bool {
        self.bias.is_some()
    }

    /// Feeds the raw gyro samples covering one scan together with that
    /// scan's velocity estimate. Returns the (possibly updated) bias.
    pub fn update(&mut self, window: &[f64], velocity: Vector2<f64>) -> f64 {
        let is_static = velocity.norm() < self.static_threshold;
        match self.bias {
            None => {
                if !is_static {
                    self.pending.clear();
                } else {
                    self.pending.extend_from_slice(window);
                    if self.pending.len() >= self.q {
                        let first = &self.pending[..self.q];
                        self.bias = Some(first.iter().sum::<f64>() / self.q as f64);
                        self.pending.clear();
                    }
                }
            }
            Some(b) if is_static && !window.is_empty() => {
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                self.bias = Some((1.0 - self.alpha) * b + self.alpha * mean);
            }
            Some(_) => {}
        }
        self.bias()
    }
}

/// Lateral Doppler velocity bias observed through the non-slip constraint
/// at the rear axle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralBiasFilter {
    pub alpha: f64,
    /// Distance from the radar back to the rear axle along body x (metres).
    pub axle_offset: f64,
    pub bias: f64,
}

impl LateralBiasFilter {
    pub fn new(alpha: f64, axle_offset: f64) -> Self {
        Self {
            alpha,
            axle_offset,
            bias: 0.0,
        }
    }

    /// Lateral velocity of the rear axle implied by a Doppler-only velocity
    /// estimate at the radar and the angular rate.
    pub fn observation(&self, v_doppler: Vector2<f64>, omega: f64) -> f64 {
        let lever = Vector2::new(-self.axle_offset, 0.0);
        (v_doppler + rate_cross(omega, lever)).y
    }

    pub fn update(&mut self, v_doppler: Vector2<f64>, omega: f64) -> f64 {
        let obs = self.observation(v_doppler, omega);
        self.bias = (1.0 - self.alpha) * self.bias + self.alpha * obs;
        self.bias
    }

    /// Body-frame velocity bias applied inside the Doppler shift.
    pub fn bias_vector(&self) -> Vector2<f64> {
        Vector2::new(0.0, self.bias)
    }
}
