//! Planar rotations and poses.
//!
//! Rotations follow the layout `[[cos θ, sin θ], [-sin θ, cos θ]]`, so a
//! positive angle turns the body frame clockwise when seen from above in a
//! standard x-right/y-up world. Poses are world-from-body: a point `q` in the
//! body frame maps to `R q + p` in the world frame.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Rotation matrix for `theta` (radians); rejects non-finite input.
pub fn angle_to_rot(theta: f64) -> Result<Matrix2<f64>> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("rotation angle"));
    }
    Ok(rot(theta))
}

/// Unchecked variant of [`angle_to_rot`] for hot paths.
#[inline]
pub fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Derivative of [`rot`] with respect to the angle.
#[inline]
pub fn rot_derivative(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, c, -c, -s)
}

/// Angle encoded by a rotation matrix with the layout of [`rot`].
pub fn rot_to_angle(r: &Matrix2<f64>) -> f64 {
    r[(0, 1)].atan2(r[(0, 0)])
}

/// Applies `rot(theta)` to a vector without building the matrix.
#[inline]
pub fn rotate(theta: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Planar rotation rate cross product: velocity of a body point at `lever`
/// (body frame) induced by the angular rate `omega` under this crate's
/// rotation convention.
#[inline]
pub fn rate_cross(omega: f64, lever: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(omega * lever.y, -omega * lever.x)
}

/// Timestamped SE(2) pose. The angle is stored unwrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub theta: f64,
    pub position: Vector2<f64>,
    pub timestamp: f64,
}

impl Pose2 {
    pub fn new(theta: f64, position: Vector2<f64>, timestamp: f64) -> Self {
        Self {
            theta,
            position,
            timestamp,
        }
    }

    pub fn identity(timestamp: f64) -> Self {
        Self::new(0.0, Vector2::zeros(), timestamp)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rot(self.theta)
    }

    /// `self ∘ other`; the result carries `other`'s timestamp.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        Pose2 {
            theta: self.theta + other.theta,
            position: self.position + rotate(self.theta, other.position),
            timestamp: other.timestamp,
        }
    }

    pub fn inverse(&self) -> Pose2 {
        Pose2 {
            theta: -self.theta,
            position: -rotate(-self.theta, self.position),
            timestamp: self.timestamp,
        }
    }

    /// Pose of `other` expressed in the frame of `self` (`self⁻¹ ∘ other`).
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    /// Maps a body-frame point into the world frame.
    pub fn transform_point(&self, q: Vector2<f64>) -> Vector2<f64> {
        rotate(self.theta, q) + self.position
    }
}
