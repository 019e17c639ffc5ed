//! Hand-held gyroscope: a spinning disc on an axle with a handle at each end.
//!
//! The model is first-order gyroscopic: the spin about the axle is a control
//! input held at the commanded rate, and only the direction of the axle
//! evolves. A torque perpendicular to the axle turns it at `τ / |L|`. There is
//! no nutation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{MathError, Vec3};

pub const MAX_SPIN_RATE: f64 = 200.0;
/// Rotational damping of the axle when the wheel is not spinning, N·m·s/rad.
/// With no angular momentum the axle behaves like an overdamped rod.
pub const FREE_ROD_DAMPING: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GyroError {
    #[error("no gyroscopic stiffness: angular momentum is zero")]
    NoStiffness,
    #[error("invalid gyroscope configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GyroConfig {
    pub wheel_mass: f64,
    pub wheel_radius: f64,
    /// Pivot to each handle, metres.
    pub handle_half_length: f64,
    pub spin_rate: f64,
}

impl Default for GyroConfig {
    fn default() -> Self {
        Self {
            wheel_mass: 1.0,
            wheel_radius: 0.2,
            handle_half_length: 0.15,
            spin_rate: 100.0,
        }
    }
}

impl GyroConfig {
    pub fn validate(&self) -> Result<(), GyroError> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("wheel mass", self.wheel_mass),
            ("wheel radius", self.wheel_radius),
            ("handle half length", self.handle_half_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(0.0..=MAX_SPIN_RATE).contains(&self.spin_rate) {
            problems.push(format!(
                "spin rate must be in [0, {MAX_SPIN_RATE}], got {}",
                self.spin_rate
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GyroError::Config(problems.join("; ")))
        }
    }

    pub fn inertia(&self) -> f64 {
        moment_of_inertia(self.wheel_mass, self.wheel_radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GyroState {
    /// Unit vector along the axle, pointing at the right handle.
    pub axis: Vec3,
    pub spin_rate: f64,
}

impl Default for GyroState {
    fn default() -> Self {
        Self {
            axis: Vec3::X,
            spin_rate: GyroConfig::default().spin_rate,
        }
    }
}

impl GyroState {
    pub fn new(axis: Vec3, spin_rate: f64) -> Self {
        Self { axis, spin_rate }
    }

    pub fn angular_momentum(&self, config: &GyroConfig) -> Vec3 {
        self.axis * (config.inertia() * self.spin_rate)
    }
}

/// Forces at the two handle grips.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HandleForcePair {
    pub left: Vec3,
    pub right: Vec3,
}

/// Uniform disc about its symmetry axis.
pub fn moment_of_inertia(wheel_mass: f64, wheel_radius: f64) -> f64 {
    0.5 * wheel_mass * wheel_radius * wheel_radius
}

/// Net torque about the pivot from forces at the two grips.
pub fn handles_to_torque(left: Vec3, right: Vec3, handle_half_length: f64, axis: Vec3) -> Vec3 {
    let arm = axis * handle_half_length;
    arm.cross(right) + (-arm).cross(left)
}

pub fn precession_rate(torque_perp: f64, l_mag: f64) -> Result<f64, GyroError> {
    if l_mag == 0.0 {
        return Err(GyroError::NoStiffness);
    }
    Ok(torque_perp / l_mag)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GyroStep {
    pub state: GyroState,
    /// Torque component that moved the axle.
    pub torque_perp: Vec3,
    /// Angular velocity of the axle during the step.
    pub axis_rate: Vec3,
    /// The wheel was not spinning, so the axle turned as a plain rod.
    pub free_rod: bool,
}

/// Advances the axle direction by one step under the handle forces.
///
/// With angular momentum `L` the axle turns at `Ω_p = axis × τ⊥ / |L|`, which
/// makes `dL/dt = τ⊥`. The rotation is applied exactly and the axle is then
/// renormalized. The spin rate is never touched here.
pub fn gyro_step(
    config: &GyroConfig,
    state: &GyroState,
    forces: &HandleForcePair,
    dt: f64,
) -> Result<GyroStep, GyroError> {
    if !(forces.left.is_finite() && forces.right.is_finite()) {
        return Err(MathError::NonFinite {
            what: "handle force",
        }
        .into());
    }
    if !state.axis.is_finite() {
        return Err(MathError::NonFinite { what: "gyro axis" }.into());
    }
    let axis = state.axis;
    let torque = handles_to_torque(forces.left, forces.right, config.handle_half_length, axis);
    let torque_perp = torque.reject_from(axis);
    let l_mag = config.inertia() * state.spin_rate.abs();

    let (axis_rate, free_rod) = if l_mag > 0.0 {
        // Negative spin flips L relative to the axle.
        let l_dir = if state.spin_rate < 0.0 { -1.0 } else { 1.0 };
        (axis.cross(torque_perp) * (l_dir / l_mag), false)
    } else {
        (torque_perp / FREE_ROD_DAMPING, true)
    };

    let rate = axis_rate.norm();
    let mut next = *state;
    if rate > 0.0 {
        let turned = axis.rotated(axis_rate / rate, rate * dt);
        next.axis = turned.try_normalize().ok_or(MathError::NonFinite { what: "gyro axis" })?;
    }
    Ok(GyroStep {
        state: next,
        torque_perp,
        axis_rate,
        free_rod,
    })
}

/// Reaction the spinning wheel pushes back into the hands when the user turns
/// the axle at `axis_rate`. Rendered as a pure couple perpendicular to the axle.
pub fn handle_reaction(config: &GyroConfig, state: &GyroState, axis_rate: Vec3) -> HandleForcePair {
    let l = state.angular_momentum(config);
    let reaction = axis_rate.cross(l);
    let right = reaction.cross(state.axis) / (2.0 * config.handle_half_length);
    HandleForcePair { left: -right, right }
}
