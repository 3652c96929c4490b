//! Continuous rotation, position and velocity over one scan interval.
//!
//! Rotation comes either from a constant angular rate (a state variable) or
//! from preintegrated gyro samples; translation always follows a constant
//! body-centric velocity, `p(t) = p(τ₁) + R(τ₁) (∫ rot(θ(s)) ds) v_b`.
//!
//! Every `∫ rot(θ(s)) ds` has the structure `[[a, b], [-b, a]]` and is carried
//! around as [`RotIntegral`].

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{rotate, Pose2};
use crate::types::{GyroSeries, ScanState};

/// Below this |ω·Δt| the closed forms switch to their Taylor series.
const SERIES_THRESHOLD: f64 = 0.1;

/// `∫ rot(θ(s)) ds` stored as the pair `(a, b)` of `[[a, b], [-b, a]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotIntegral {
    pub a: f64,
    pub b: f64,
}

impl RotIntegral {
    #[inline]
    pub fn apply(&self, v: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.a * v.x + self.b * v.y, -self.b * v.x + self.a * v.y)
    }

    /// Column `j` of the matrix, i.e. the derivative of `apply(v)` w.r.t. `v_j`.
    #[inline]
    pub fn column(&self, j: usize) -> Vector2<f64> {
        if j == 0 {
            Vector2::new(self.a, -self.b)
        } else {
            Vector2::new(self.b, self.a)
        }
    }

    /// `rot(phi) · self`.
    #[inline]
    pub fn rotated(&self, phi: f64) -> RotIntegral {
        let (s, c) = phi.sin_cos();
        RotIntegral {
            a: c * self.a - s * self.b,
            b: s * self.a + c * self.b,
        }
    }

    #[inline]
    pub fn sub(&self, other: &RotIntegral) -> RotIntegral {
        RotIntegral {
            a: self.a - other.a,
            b: self.b - other.b,
        }
    }
}

/// `θ(t) = ω (t − t₁)`.
pub fn theta_const(omega: f64, t: f64, t1: f64) -> f64 {
    omega * (t - t1)
}

/// Closed form of `∫₀^dt rot(ω s) ds` and its derivative with respect to ω.
pub fn rot_integral_const(omega: f64, dt: f64) -> (RotIntegral, RotIntegral) {
    let x = omega * dt;
    let (g, dg, h, dh) = if x.abs() < SERIES_THRESHOLD {
        let x2 = x * x;
        let g = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)));
        let dg = -x / 3.0 + x * x2 / 30.0 - x * x2 * x2 / 840.0 + x * x2 * x2 * x2 / 45360.0;
        let h = x / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0 * (1.0 - x2 / 90.0))));
        let dh = 0.5 - x2 / 8.0 + x2 * x2 / 144.0 - x2 * x2 * x2 / 5760.0
            + x2 * x2 * x2 * x2 / 403200.0;
        (g, dg, h, dh)
    } else {
        let (s, c) = x.sin_cos();
        let g = s / x;
        let h = (1.0 - c) / x;
        let dg = (x * c - s) / (x * x);
        let dh = (x * s - (1.0 - c)) / (x * x);
        (g, dg, h, dh)
    };
    // a = dt·g(x), b = dt·h(x), x = ω·dt  ⇒  ∂/∂ω = dt²·g'(x), dt²·h'(x).
    (
        RotIntegral { a: dt * g, b: dt * h },
        RotIntegral {
            a: dt * dt * dg,
            b: dt * dt * dh,
        },
    )
}

/// Integral of the linearly interpolated rate over `[lo, hi]` inside gyro
/// segment `i`.
fn segment_rate_integral(ts: &[f64], w: &[f64], i: usize, lo: f64, hi: f64) -> f64 {
    let h = ts[i + 1] - ts[i];
    let slope = (w[i + 1] - w[i]) / h;
    let (u0, u1) = (lo - ts[i], hi - ts[i]);
    w[i] * (u1 - u0) + 0.5 * slope * (u1 * u1 - u0 * u0)
}

fn segment_index(ts: &[f64], t: f64) -> usize {
    // Last i with ts[i] <= t, clamped so that i + 1 is valid.
    let i = ts.partition_point(|&x| x <= t);
    i.saturating_sub(1).min(ts.len() - 2)
}

/// `θ(t) = ∫_{t₁}^{t} (w̃(s) − b) ds` with the rate linearly interpolated
/// between gyro samples.
pub fn theta_preint(gyro: &GyroSeries, t: f64, t1: f64) -> Result<f64> {
    let (lo, hi, sign) = if t >= t1 { (t1, t, 1.0) } else { (t, t1, -1.0) };
    if !gyro.covers(lo, hi) {
        return Err(Error::GyroCoverage { start: lo, end: hi });
    }
    let ts = gyro.timestamps();
    let w: Vec<f64> = gyro.rates().iter().map(|r| r - gyro.bias).collect();
    let mut i = segment_index(ts, lo);
    let mut acc = 0.0;
    let mut cur = lo;
    while cur < hi {
        let seg_end = ts[i + 1].min(hi);
        acc += segment_rate_integral(ts, &w, i, cur, seg_end);
        cur = seg_end;
        i += 1;
        if i + 1 >= ts.len() {
            break;
        }
    }
    Ok(sign * acc)
}

/// Gyro preintegration over one scan interval.
///
/// Knots are the gyro samples bracketing `[t₁, t_end]`. `θ` integrates the
/// piecewise-linear bias-corrected rate exactly; the rotation-matrix elements
/// are taken piecewise-linear between knots and integrated exactly.
#[derive(Debug, Clone)]
pub struct PreintCache {
    t1: f64,
    knot_times: Vec<f64>,
    knot_rates: Vec<f64>,
    knot_thetas: Vec<f64>,
    knot_integrals: Vec<RotIntegral>,
}

impl PreintCache {
    pub fn new(gyro: &GyroSeries, t1: f64, t_end: f64) -> Result<Self> {
        if !gyro.covers(t1, t_end) || t_end < t1 {
            return Err(Error::GyroCoverage {
                start: t1,
                end: t_end,
            });
        }
        let ts = gyro.timestamps();
        let first = segment_index(ts, t1);
        let last = (segment_index(ts, t_end) + 1).max(first + 1);
        let knot_times = ts[first..=last].to_vec();
        let knot_rates: Vec<f64> = gyro.rates()[first..=last]
            .iter()
            .map(|r| r - gyro.bias)
            .collect();

        // θ at the first knot, measured from t₁ (non-positive).
        let theta0 = -segment_rate_integral(&knot_times, &knot_rates, 0, knot_times[0], t1);
        let mut knot_thetas = Vec::with_capacity(knot_times.len());
        knot_thetas.push(theta0);
        for k in 0..knot_times.len() - 1 {
            let d = segment_rate_integral(&knot_times, &knot_rates, k, knot_times[k], knot_times[k + 1]);
            knot_thetas.push(knot_thetas[k] + d);
        }

        let mut cache = Self {
            t1,
            knot_times,
            knot_rates,
            knot_thetas,
            knot_integrals: Vec::new(),
        };
        // Integrals are anchored at t₁: start from zero at knot 0 and shift.
        let n = cache.knot_times.len();
        let mut integrals = Vec::with_capacity(n);
        integrals.push(RotIntegral::default());
        for k in 0..n - 1 {
            let h = cache.knot_times[k + 1] - cache.knot_times[k];
            let (s0, c0) = cache.knot_thetas[k].sin_cos();
            let (s1, c1) = cache.knot_thetas[k + 1].sin_cos();
            let prev = integrals[k];
            integrals.push(RotIntegral {
                a: prev.a + 0.5 * h * (c0 + c1),
                b: prev.b + 0.5 * h * (s0 + s1),
            });
        }
        cache.knot_integrals = integrals;
        let at_t1 = cache.integral_unanchored(t1);
        for v in cache.knot_integrals.iter_mut() {
            *v = v.sub(&at_t1);
        }
        Ok(cache)
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn start(&self) -> f64 {
        self.knot_times[0]
    }

    pub fn end(&self) -> f64 {
        *self.knot_times.last().unwrap()
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn knot_thetas(&self) -> &[f64] {
        &self.knot_thetas
    }

    fn segment(&self, t: f64) -> usize {
        segment_index(&self.knot_times, t)
    }

    /// Heading change since `t₁`.
    pub fn theta(&self, t: f64) -> f64 {
        let k = self.segment(t);
        self.knot_thetas[k]
            + segment_rate_integral(&self.knot_times, &self.knot_rates, k, self.knot_times[k], t)
    }

    fn integral_unanchored(&self, t: f64) -> RotIntegral {
        let k = self.segment(t);
        let h = self.knot_times[k + 1] - self.knot_times[k];
        let u = t - self.knot_times[k];
        let (s0, c0) = self.knot_thetas[k].sin_cos();
        let (s1, c1) = self.knot_thetas[k + 1].sin_cos();
        let base = self.knot_integrals[k];
        let q = 0.5 * u * u / h;
        RotIntegral {
            a: base.a + c0 * u + (c1 - c0) * q,
            b: base.b + s0 * u + (s1 - s0) * q,
        }
    }

    /// `∫_{t₁}^{t} rot(θ(s)) ds` under the piecewise-linear element model.
    pub fn integral(&self, t: f64) -> RotIntegral {
        self.integral_unanchored(t)
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }
}

/// Source of the rotation over a scan.
#[derive(Debug, Clone)]
pub enum MotionModel {
    /// `θ(t) = ω (t − t₁)` with `ω` taken from the state.
    ConstantRate,
    Gyro(PreintCache),
}

impl MotionModel {
    /// Heading change since the anchor, `∫ rot ds` since the anchor, and their
    /// derivatives with respect to ω (zero for the gyro model).
    pub fn evaluate(&self, state: &ScanState, t: f64) -> MotionSample {
        let dt = t - state.anchor.timestamp;
        match self {
            MotionModel::ConstantRate => {
                let omega = state.omega.unwrap_or(0.0);
                let (integral, d_integral) = rot_integral_const(omega, dt);
                MotionSample {
                    theta: theta_const(omega, t, state.anchor.timestamp),
                    integral,
                    d_theta: dt,
                    d_integral,
                }
            }
            MotionModel::Gyro(cache) => MotionSample {
                theta: cache.theta(t),
                integral: cache.integral(t),
                d_theta: 0.0,
                d_integral: RotIntegral::default(),
            },
        }
    }

    pub fn has_rate_state(&self) -> bool {
        matches!(self, MotionModel::ConstantRate)
    }
}

/// Scan-relative motion at one instant.
#[derive(Debug, Clone, Copy)]
pub struct MotionSample {
    pub theta: f64,
    pub integral: RotIntegral,
    pub d_theta: f64,
    pub d_integral: RotIntegral,
}

/// World pose at `t`.
pub fn pose_at(state: &ScanState, model: &MotionModel, t: f64) -> Pose2 {
    let s = model.evaluate(state, t);
    Pose2 {
        theta: state.anchor.theta + s.theta,
        position: state.anchor.position + rotate(state.anchor.theta, s.integral.apply(state.v_body)),
        timestamp: t,
    }
}

/// World position at `t`.
pub fn pos_at(state: &ScanState, model: &MotionModel, t: f64) -> Vector2<f64> {
    pose_at(state, model, t).position
}

/// World velocity `R_W(t) v_b`.
pub fn vel_world(state: &ScanState, model: &MotionModel, t: f64) -> Vector2<f64> {
    let s = model.evaluate(state, t);
    rotate(state.anchor.theta + s.theta, state.v_body)
}
