//! Vector math, the fixed-step integrator, force clamping and rotating-frame
//! transforms shared by every scenario.
//!
//! Everything here is pure and never reads a clock, so two runs fed the same
//! inputs produce bitwise-identical results.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3-vector of `f64`. Serialized as a plain `[x, y, z]` array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component of `self` orthogonal to the unit vector `axis`.
    #[inline]
    pub fn reject_from(self, axis: Vec3) -> Vec3 {
        self - axis * self.dot(axis)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Rodrigues rotation of `self` by `angle` radians about the unit vector `axis`.
    pub fn rotated(self, axis: Vec3, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        self * c + axis.cross(self) * s + axis * (axis.dot(self) * (1.0 - c))
    }

    /// Appends the canonical little-endian encoding of the three components.
    pub fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.x.to_le_bytes());
        out.extend_from_slice(&self.y.to_le_bytes());
        out.extend_from_slice(&self.z.to_le_bytes());
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("state corruption: non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("invalid step configuration: {0}")]
    InvalidStep(String),
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_V_EPS: f64 = 1e-4;
pub const MAX_DT: f64 = 5e-3;

/// Servo period and rest-detection threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub v_eps: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            v_eps: DEFAULT_V_EPS,
        }
    }
}

impl StepConfig {
    pub fn new(dt: f64, v_eps: f64) -> Result<Self, MathError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(MathError::InvalidStep(format!(
                "dt must be in (0, {MAX_DT}], got {dt}"
            )));
        }
        if !(v_eps > 0.0 && v_eps.is_finite()) {
            return Err(MathError::InvalidStep(format!(
                "v_eps must be > 0, got {v_eps}"
            )));
        }
        Ok(Self { dt, v_eps })
    }
}

/// One semi-implicit Euler step: velocity first, then position with the new velocity.
pub fn integrate_semi_implicit(
    pos: Vec3,
    vel: Vec3,
    acc: Vec3,
    dt: f64,
) -> Result<(Vec3, Vec3), MathError> {
    if !pos.is_finite() {
        return Err(MathError::NonFinite { what: "position" });
    }
    if !vel.is_finite() {
        return Err(MathError::NonFinite { what: "velocity" });
    }
    if !acc.is_finite() {
        return Err(MathError::NonFinite {
            what: "acceleration",
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MathError::InvalidStep(format!("dt must be > 0, got {dt}")));
    }
    let vel = vel + acc * dt;
    let pos = pos + vel * dt;
    Ok((pos, vel))
}

/// Scalar variant used by the 1-DOF friction block.
pub fn integrate_semi_implicit_1d(
    pos: f64,
    vel: f64,
    acc: f64,
    dt: f64,
) -> Result<(f64, f64), MathError> {
    let (p, v) = integrate_semi_implicit(
        Vec3::new(pos, 0.0, 0.0),
        Vec3::new(vel, 0.0, 0.0),
        Vec3::new(acc, 0.0, 0.0),
        dt,
    )?;
    Ok((p.x, v.x))
}

pub const DEFAULT_MAX_FORCE_N: f64 = 8.0;

/// Scales `f` down so that its magnitude does not exceed `max_n`. Direction is kept.
pub fn clamp_force(f: Vec3, max_n: f64) -> Vec3 {
    debug_assert!(max_n > 0.0);
    let n = f.norm();
    if n <= max_n || n == 0.0 {
        f
    } else {
        let out = f * (max_n / n);
        // The scaled vector can land one ulp above the limit.
        if out.norm() > max_n {
            out * (1.0 - f64::EPSILON)
        } else {
            out
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameDirection {
    RotatingToInertial,
    InertialToRotating,
}

/// Maps a vector between a frame spinning at constant `omega` and the inertial
/// frame, `t` seconds after the two frames coincided.
pub fn frame_transform(v: Vec3, omega: Vec3, t: f64, direction: FrameDirection) -> Vec3 {
    let Some(axis) = omega.try_normalize() else {
        return v;
    };
    let angle = omega.norm() * t;
    match direction {
        FrameDirection::RotatingToInertial => v.rotated(axis, angle),
        FrameDirection::InertialToRotating => v.rotated(axis, -angle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rest_stays_at_rest() {
        let (p, v) = integrate_semi_implicit(Vec3::ZERO, Vec3::ZERO, Vec3::ZERO, 1e-3).unwrap();
        assert_eq!(p, Vec3::ZERO);
        assert_eq!(v, Vec3::ZERO);
    }

    #[test]
    fn uniform_motion() {
        let (p, v) = integrate_semi_implicit(Vec3::ZERO, Vec3::X, Vec3::ZERO, 0.5).unwrap();
        assert_eq!(p, Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(v, Vec3::X);
    }

    #[test]
    fn one_gravity_step_updates_velocity_first() {
        let (p, v) =
            integrate_semi_implicit(Vec3::ZERO, Vec3::ZERO, Vec3::new(0.0, -9.81, 0.0), 1e-3)
                .unwrap();
        assert!((v.y - -0.00981).abs() < 1e-15);
        assert!((p.y - -9.81e-6).abs() < 1e-18);
    }

    #[test]
    fn non_finite_input_is_state_corruption() {
        let err = integrate_semi_implicit(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::ZERO, Vec3::ZERO, 1e-3)
            .unwrap_err();
        assert_eq!(err, MathError::NonFinite { what: "position" });
        assert!(integrate_semi_implicit(Vec3::ZERO, Vec3::ZERO, Vec3::new(0.0, f64::INFINITY, 0.0), 1e-3).is_err());
        assert!(integrate_semi_implicit(Vec3::ZERO, Vec3::ZERO, Vec3::ZERO, 0.0).is_err());
    }

    #[test]
    fn step_config_bounds() {
        assert!(StepConfig::new(1e-3, 1e-4).is_ok());
        assert!(StepConfig::new(5e-3, 1e-4).is_ok());
        assert!(StepConfig::new(6e-3, 1e-4).is_err());
        assert!(StepConfig::new(0.0, 1e-4).is_err());
        assert!(StepConfig::new(1e-3, 0.0).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_force(Vec3::new(3.0, 0.0, 0.0), 8.0), Vec3::new(3.0, 0.0, 0.0));
        assert_eq!(clamp_force(Vec3::new(12.0, 0.0, 0.0), 8.0), Vec3::new(8.0, 0.0, 0.0));
        let c = clamp_force(Vec3::new(6.0, 8.0, 0.0), 5.0);
        assert!((c - Vec3::new(3.0, 4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn static_frame_is_identity() {
        let v = frame_transform(Vec3::X, Vec3::ZERO, 5.0, FrameDirection::RotatingToInertial);
        assert_eq!(v, Vec3::X);
    }

    #[test]
    fn quarter_turn() {
        let v = frame_transform(
            Vec3::X,
            Vec3::new(0.0, 0.0, FRAC_PI_2),
            1.0,
            FrameDirection::RotatingToInertial,
        );
        assert!((v - Vec3::Y).norm() < 1e-9);
    }

    fn finite() -> impl Strategy<Value = f64> {
        -100.0f64..100.0
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (finite(), finite(), finite()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn integrator_is_bitwise_deterministic(p in vec3(), v in vec3(), a in vec3(), dt in 1e-4f64..5e-3) {
            let first = integrate_semi_implicit(p, v, a, dt).unwrap();
            let second = integrate_semi_implicit(p, v, a, dt).unwrap();
            prop_assert_eq!(first.0.to_array().map(f64::to_bits), second.0.to_array().map(f64::to_bits));
            prop_assert_eq!(first.1.to_array().map(f64::to_bits), second.1.to_array().map(f64::to_bits));
        }

        #[test]
        fn clamp_never_grows_or_turns(f in vec3(), max in 0.1f64..50.0) {
            let c = clamp_force(f, max);
            prop_assert!(c.norm() <= f.norm());
            prop_assert!(c.norm() <= max);
            if f.norm() > 1e-9 {
                let cos = c.dot(f) / (c.norm() * f.norm());
                prop_assert!((cos - 1.0).abs() < 1e-12);
                prop_assert!((c.norm() - f.norm().min(max)).abs() < 1e-12 * max.max(1.0));
            }
        }

        #[test]
        fn frame_transform_preserves_norm_and_round_trips(v in vec3(), w in vec3(), t in -10.0f64..10.0) {
            let i = frame_transform(v, w, t, FrameDirection::RotatingToInertial);
            prop_assert!((i.norm() - v.norm()).abs() < 1e-12 * v.norm().max(1.0));
            let back = frame_transform(i, w, t, FrameDirection::InertialToRotating);
            prop_assert!((back - v).norm() < 1e-12 * v.norm().max(1.0));
        }

        #[test]
        fn frame_transform_composes(v in vec3(), w in vec3(), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
            let d = FrameDirection::RotatingToInertial;
            let two_step = frame_transform(frame_transform(v, w, t2, d), w, t1, d);
            let one_step = frame_transform(v, w, t1 + t2, d);
            prop_assert!((two_step - one_step).norm() < 1e-12 * v.norm().max(1.0) * (1.0 + w.norm()));
        }
    }
}
