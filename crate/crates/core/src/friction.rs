//! Block on an inclined plane with stick/slip Coulomb friction.
//!
//! The block moves along one track coordinate `s` (up-slope positive). All
//! tangential quantities are signed along that axis. "Applied normal" is the
//! user force along the outward surface normal, so a positive value pulls the
//! block off the plane and a negative one presses it in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{integrate_semi_implicit_1d, MathError};

pub const DEFAULT_G: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid friction scene: {0}")]
pub struct SceneError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrictionScene {
    /// Incline angle, radians.
    pub theta: f64,
    pub mu_s: f64,
    pub mu_k: f64,
    pub mass: f64,
    pub g: f64,
    pub track_half_length: f64,
}

impl Default for FrictionScene {
    fn default() -> Self {
        Self {
            theta: 30f64.to_radians(),
            mu_s: 0.5,
            mu_k: 0.3,
            mass: 1.0,
            g: DEFAULT_G,
            track_half_length: 0.5,
        }
    }
}

impl FrictionScene {
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut problems = Vec::new();
        if !(self.theta >= 0.0 && self.theta < std::f64::consts::FRAC_PI_2) {
            problems.push(format!("theta must be in [0, pi/2), got {}", self.theta));
        }
        if self.mu_k.is_nan() || self.mu_k < 0.0 {
            problems.push(format!("mu_k must be >= 0, got {}", self.mu_k));
        }
        if self.mu_s.is_nan() || self.mu_s < self.mu_k {
            problems.push(format!("mu_s >= mu_k required, got mu_s={} mu_k={}", self.mu_s, self.mu_k));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            problems.push(format!("mass must be > 0, got {}", self.mass));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            problems.push(format!("g must be > 0, got {}", self.g));
        }
        if !(self.track_half_length > 0.0 && self.track_half_length.is_finite()) {
            problems.push(format!(
                "track half length must be > 0, got {}",
                self.track_half_length
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SceneError(problems.join("; ")))
        }
    }

    /// Gravity component along the track (negative: it pulls down-slope).
    pub fn gravity_tangential(&self) -> f64 {
        -self.mass * self.g * self.theta.sin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactMode {
    Stick,
    Slip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub s: f64,
    pub v: f64,
    pub mode: ContactMode,
}

impl Default for BlockState {
    fn default() -> Self {
        Self::at_rest(0.0)
    }
}

impl Default for ForceBreakdown {
    fn default() -> Self {
        Self {
            contact: ContactMode::Stick,
            gravity_tangential: 0.0,
            normal: 0.0,
            friction: 0.0,
            applied_tangential: 0.0,
            applied_normal: 0.0,
        }
    }
}

impl BlockState {
    pub fn at_rest(s: f64) -> Self {
        Self {
            s,
            v: 0.0,
            mode: ContactMode::Stick,
        }
    }

    pub fn sliding(s: f64, v: f64) -> Self {
        Self {
            s,
            v,
            mode: ContactMode::Slip,
        }
    }

    /// Mechanical energy with the datum at s = 0.
    pub fn energy(&self, scene: &FrictionScene) -> f64 {
        0.5 * scene.mass * self.v * self.v + scene.mass * scene.g * self.s * scene.theta.sin()
    }
}

/// Every force acting along and across the track on one tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceBreakdown {
    /// Contact regime the friction force was computed in.
    pub contact: ContactMode,
    pub gravity_tangential: f64,
    pub normal: f64,
    pub friction: f64,
    pub applied_tangential: f64,
    pub applied_normal: f64,
}

/// Contact normal force. The block never leaves the plane, so pull-off beyond
/// the weight component simply drives it to zero.
pub fn normal_force(scene: &FrictionScene, applied_normal: f64) -> f64 {
    (scene.mass * scene.g * scene.theta.cos() - applied_normal).max(0.0)
}

/// Stick-state test. Break-away needs the non-friction tangential force to
/// strictly exceed the static bound; equality stays stuck.
pub fn breakaway_check(scene: &FrictionScene, applied_tangential: f64, normal: f64) -> ContactMode {
    let drive = applied_tangential + scene.gravity_tangential();
    if drive.abs() > scene.mu_s * normal {
        ContactMode::Slip
    } else {
        ContactMode::Stick
    }
}

/// Tangential and normal user force on the block for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AppliedForce {
    pub tangential: f64,
    pub normal: f64,
}

impl AppliedForce {
    pub const NONE: AppliedForce = AppliedForce {
        tangential: 0.0,
        normal: 0.0,
    };

    pub fn new(tangential: f64, normal: f64) -> Self {
        Self { tangential, normal }
    }
}

/// Advances the block one step.
///
/// Kinetic friction uses the pre-step direction of motion (or the drive
/// direction on the break-away tick). When the velocity would reverse, or
/// decay under `v_eps` while decelerating, the block re-sticks in place.
/// Track ends are inelastic stops.
pub fn friction_step(
    scene: &FrictionScene,
    state: &BlockState,
    applied: AppliedForce,
    dt: f64,
    v_eps: f64,
) -> Result<(BlockState, ForceBreakdown), MathError> {
    if !(applied.tangential.is_finite() && applied.normal.is_finite()) {
        return Err(MathError::NonFinite {
            what: "applied force",
        });
    }
    let normal = normal_force(scene, applied.normal);
    let gravity_t = scene.gravity_tangential();
    let drive = applied.tangential + gravity_t;
    let mut breakdown = ForceBreakdown {
        contact: ContactMode::Stick,
        gravity_tangential: gravity_t,
        normal,
        friction: 0.0,
        applied_tangential: applied.tangential,
        applied_normal: applied.normal,
    };

    // A slipping block with exactly zero velocity is treated as stuck.
    let mode = if state.v == 0.0 { ContactMode::Stick } else { state.mode };
    let (direction, broke_away) = match mode {
        ContactMode::Stick => {
            if breakaway_check(scene, applied.tangential, normal) == ContactMode::Stick {
                breakdown.friction = -drive;
                return Ok((BlockState::at_rest(state.s), breakdown));
            }
            (drive.signum(), true)
        }
        ContactMode::Slip => (state.v.signum(), false),
    };

    let friction = -scene.mu_k * normal * direction;
    breakdown.friction = friction;
    breakdown.contact = ContactMode::Slip;
    let acc = (drive + friction) / scene.mass;
    let (s_new, v_new) = integrate_semi_implicit_1d(state.s, state.v, acc, dt)?;

    if !broke_away {
        let reversed = v_new * state.v <= 0.0;
        let settling = v_new.abs() < v_eps && acc * state.v < 0.0;
        if reversed || settling {
            return Ok((BlockState::at_rest(state.s), breakdown));
        }
    }

    let limit = scene.track_half_length;
    if s_new.abs() >= limit {
        return Ok((BlockState::at_rest(s_new.clamp(-limit, limit)), breakdown));
    }
    Ok((BlockState::sliding(s_new, v_new), breakdown))
}

/// Rounds half away from zero to two decimals and formats.
pub fn format_hud_value(value: f64) -> String {
    let rounded = (value * 100.0).round() / 100.0;
    // Avoid "-0.00".
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:.2}")
}

pub const HUD_GRAVITY: &str = "gravity_tangential";
pub const HUD_NORMAL: &str = "normal";
pub const HUD_FRICTION: &str = "friction";
pub const HUD_APPLIED: &str = "applied";

/// Raw HUD magnitudes, in newtons.
pub fn hud_values(b: &ForceBreakdown) -> [(&'static str, f64); 4] {
    [
        (HUD_GRAVITY, b.gravity_tangential.abs()),
        (HUD_NORMAL, b.normal.abs()),
        (HUD_FRICTION, b.friction.abs()),
        (HUD_APPLIED, b.applied_tangential.abs()),
    ]
}

/// Heads-up display strings: magnitudes in newtons with two decimals.
pub fn hud_fields(b: &ForceBreakdown) -> Vec<(&'static str, String)> {
    hud_values(b)
        .into_iter()
        .map(|(k, v)| (k, format_hud_value(v)))
        .collect()
}
