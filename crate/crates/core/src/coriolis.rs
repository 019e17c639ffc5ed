//! Puck on a spinning platform, described in the platform's rotating frame.
//!
//! The ball rolls on the platform surface and feels the Coriolis deflection
//! plus linear ground drag. The glider floats above it and feels nothing but
//! the user's push, which is what a non-rotating observer would expect.
//!
//! The velocity-dependent Coriolis term is integrated as an exact rotation of
//! the velocity vector so that it does no work, whatever the step size. The
//! remaining forces go through the usual semi-implicit Euler update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{MathError, Vec3};

/// Speed above which a resting puck counts as launched.
pub const LAUNCH_SPEED: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoriolisError {
    #[error("inertial circle undefined for a non-rotating frame")]
    NoRotation,
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PuckKind {
    Ball,
    Glider,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    /// Centre in rotating-frame coordinates.
    pub center: Vec3,
    pub radius: f64,
}

impl Goal {
    /// A goal sitting on the platform rim at `angle` radians from +x.
    pub fn on_rim(platform_radius: f64, angle: f64, radius: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            center: Vec3::new(platform_radius * c, platform_radius * s, 0.0),
            radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoriolisScene {
    /// Platform spin about +z, rad/s. Sign gives the direction.
    pub omega: f64,
    pub platform_radius: f64,
    pub goal: Goal,
    pub puck_mass: f64,
    /// Linear drag toward the platform surface velocity, N·s/m. Ball only.
    pub ground_drag: f64,
    pub centrifugal_enabled: bool,
    /// Scale on the Coriolis force fed straight to the hand.
    pub haptic_gain: f64,
}

impl Default for CoriolisScene {
    fn default() -> Self {
        Self {
            omega: 1.0,
            platform_radius: 1.0,
            goal: Goal::on_rim(1.0, 90f64.to_radians(), 0.1),
            puck_mass: 0.5,
            ground_drag: 0.2,
            centrifugal_enabled: false,
            haptic_gain: 1.0,
        }
    }
}

impl CoriolisScene {
    pub fn omega_vec(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.omega)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if !self.omega.is_finite() {
            problems.push("omega must be finite".to_string());
        }
        if !(self.platform_radius > 0.0 && self.platform_radius.is_finite()) {
            problems.push("platform radius must be > 0".to_string());
        }
        if !(self.goal.radius > 0.0 && self.goal.radius.is_finite()) {
            problems.push("goal radius must be > 0".to_string());
        }
        if !(self.puck_mass > 0.0 && self.puck_mass.is_finite()) {
            problems.push("puck mass must be > 0".to_string());
        }
        if !(self.ground_drag >= 0.0 && self.ground_drag.is_finite()) {
            problems.push("ground drag must be >= 0".to_string());
        }
        if !self.haptic_gain.is_finite() {
            problems.push("haptic gain must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuckState {
    pub kind: PuckKind,
    pub pos: Vec3,
    pub vel: Vec3,
}

impl PuckState {
    pub fn at_rest(kind: PuckKind, pos: Vec3) -> Self {
        Self {
            kind,
            pos,
            vel: Vec3::ZERO,
        }
    }

    pub fn launched(kind: PuckKind, pos: Vec3, vel: Vec3) -> Self {
        Self { kind, pos, vel }
    }

    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        0.5 * mass * self.vel.norm_squared()
    }
}

/// Forces acting on the puck during one step, for arrows and the HUD.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PuckForces {
    pub applied: Vec3,
    pub coriolis: Vec3,
    pub centrifugal: Vec3,
    pub drag: Vec3,
    /// Force rendered straight to the device on top of the coupling reaction.
    pub haptic_feedback: Vec3,
}

/// Fictitious deflecting force on a body moving at `vel` in a frame spinning at `omega`.
#[inline]
pub fn coriolis_force(mass: f64, omega: Vec3, vel: Vec3) -> Vec3 {
    omega.cross(vel) * (-2.0 * mass)
}

fn planar(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0)
}

fn check_inputs(state: &PuckState, applied: Vec3) -> Result<(), MathError> {
    if !state.pos.is_finite() {
        return Err(MathError::NonFinite { what: "position" });
    }
    if !state.vel.is_finite() {
        return Err(MathError::NonFinite { what: "velocity" });
    }
    if !applied.is_finite() {
        return Err(MathError::NonFinite {
            what: "applied force",
        });
    }
    Ok(())
}

/// The platform rim is an inelastic wall: the puck is put back on the rim and
/// loses its outward velocity.
fn enforce_wall(scene: &CoriolisScene, mut state: PuckState) -> PuckState {
    let r = state.pos.norm();
    if r > scene.platform_radius {
        let n = state.pos / r;
        state.pos = n * scene.platform_radius;
        let outward = state.vel.dot(n);
        if outward > 0.0 {
            state.vel -= n * outward;
        }
    }
    state
}

pub fn step_ball(
    scene: &CoriolisScene,
    state: &PuckState,
    applied: Vec3,
    dt: f64,
) -> Result<(PuckState, PuckForces), MathError> {
    debug_assert_eq!(state.kind, PuckKind::Ball);
    check_inputs(state, applied)?;
    let m = scene.puck_mass;
    let applied = planar(applied);
    let omega = scene.omega_vec();

    let coriolis = coriolis_force(m, omega, state.vel);
    let centrifugal = if scene.centrifugal_enabled {
        planar(state.pos) * (m * scene.omega * scene.omega)
    } else {
        Vec3::ZERO
    };
    // The platform surface is at rest in this frame.
    let drag = state.vel * -scene.ground_drag;

    // dv/dt = -2 Ω × v turns v at rate -2Ω about z without changing its length.
    let turned = state.vel.rotated(Vec3::Z, -2.0 * scene.omega * dt);
    let vel = turned + (applied + centrifugal + drag) * (dt / m);
    let pos = state.pos + vel * dt;
    if !pos.is_finite() || !vel.is_finite() {
        return Err(MathError::NonFinite { what: "puck state" });
    }
    let next = enforce_wall(
        scene,
        PuckState {
            kind: PuckKind::Ball,
            pos: planar(pos),
            vel: planar(vel),
        },
    );
    Ok((
        next,
        PuckForces {
            applied,
            coriolis,
            centrifugal,
            drag,
            haptic_feedback: coriolis * scene.haptic_gain,
        },
    ))
}

pub fn step_glider(
    scene: &CoriolisScene,
    state: &PuckState,
    applied: Vec3,
    dt: f64,
) -> Result<(PuckState, PuckForces), MathError> {
    debug_assert_eq!(state.kind, PuckKind::Glider);
    check_inputs(state, applied)?;
    let applied = planar(applied);
    let (pos, vel) = crate::math::integrate_semi_implicit(
        state.pos,
        state.vel,
        applied / scene.puck_mass,
        dt,
    )?;
    let next = enforce_wall(
        scene,
        PuckState {
            kind: PuckKind::Glider,
            pos: planar(pos),
            vel: planar(vel),
        },
    );
    Ok((
        next,
        PuckForces {
            applied,
            ..Default::default()
        },
    ))
}

/// Dispatches on the puck kind.
pub fn step_puck(
    scene: &CoriolisScene,
    state: &PuckState,
    applied: Vec3,
    dt: f64,
) -> Result<(PuckState, PuckForces), MathError> {
    match state.kind {
        PuckKind::Ball => step_ball(scene, state, applied, dt),
        PuckKind::Glider => step_glider(scene, state, applied, dt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Scored,
    Missed,
    InPlay,
}

/// Goal first, then the rim: a puck touching the rim inside the goal scores.
pub fn goal_check(state: &PuckState, goal: &Goal, platform_radius: f64) -> Outcome {
    if (state.pos - goal.center).norm() <= goal.radius {
        Outcome::Scored
    } else if state.pos.norm() >= platform_radius * (1.0 - 1e-12) {
        Outcome::Missed
    } else {
        Outcome::InPlay
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundScore {
    pub attempts: u32,
    pub goals: u32,
    pub last_outcome: Outcome,
    /// Waiting for the next launch.
    pub armed: bool,
}

impl Default for RoundScore {
    fn default() -> Self {
        Self {
            attempts: 0,
            goals: 0,
            last_outcome: Outcome::InPlay,
            armed: true,
        }
    }
}

impl RoundScore {
    /// Updates the tally from the post-step state. Returns the outcome when an
    /// attempt just finished, at which point the caller resets the puck.
    pub fn observe(&mut self, state: &PuckState, goal: &Goal, platform_radius: f64) -> Option<Outcome> {
        if self.armed {
            if state.vel.norm() > LAUNCH_SPEED {
                self.armed = false;
                self.attempts += 1;
                self.last_outcome = Outcome::InPlay;
            } else {
                return None;
            }
        }
        match goal_check(state, goal, platform_radius) {
            Outcome::InPlay => None,
            done => {
                if done == Outcome::Scored {
                    self.goals += 1;
                }
                self.last_outcome = done;
                self.armed = true;
                Some(done)
            }
        }
    }
}

/// Radius and period of the circle a free particle traces under the Coriolis
/// force alone.
pub fn inertial_circle(speed: f64, omega: f64) -> Result<(f64, f64), CoriolisError> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(CoriolisError::NoRotation);
    }
    let w = omega.abs();
    Ok((speed / (2.0 * w), std::f64::consts::PI / w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const DT: f64 = 1e-3;

    fn free_scene(omega: f64) -> CoriolisScene {
        CoriolisScene {
            omega,
            platform_radius: 5.0,
            ground_drag: 0.0,
            centrifugal_enabled: false,
            ..Default::default()
        }
    }

    #[test]
    fn coriolis_examples() {
        assert_eq!(coriolis_force(0.5, Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)), Vec3::ZERO);
        let f = coriolis_force(0.5, Vec3::Z, Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(f, Vec3::new(0.0, -2.0, 0.0));
        assert_eq!(f.norm(), 2.0);
    }

    #[test]
    fn inertial_circle_examples() {
        let (r, p) = inertial_circle(1.0, 2.0).unwrap();
        assert_eq!(r, 0.25);
        assert_eq!(p, FRAC_PI_2);
        let (r, p) = inertial_circle(0.0, -4.0).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(p, PI / 4.0);
        assert_eq!(inertial_circle(1.0, 0.0), Err(CoriolisError::NoRotation));
    }

    #[test]
    fn ball_without_rotation_moves_straight() {
        let sc = free_scene(0.0);
        let mut st = PuckState::launched(PuckKind::Ball, Vec3::ZERO, Vec3::new(0.3, 0.4, 0.0));
        for _ in 0..2000 {
            st = step_ball(&sc, &st, Vec3::ZERO, DT).unwrap().0;
        }
        assert_eq!(st.vel, Vec3::new(0.3, 0.4, 0.0));
        assert!((st.pos - Vec3::new(0.6, 0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn co_rotating_ball_stays_put() {
        let sc = CoriolisScene { omega: 2.0, ..Default::default() };
        let start = Vec3::new(0.3, -0.2, 0.0);
        let mut st = PuckState::at_rest(PuckKind::Ball, start);
        for _ in 0..1000 {
            let (next, f) = step_ball(&sc, &st, Vec3::ZERO, DT).unwrap();
            assert_eq!(f.coriolis, Vec3::ZERO);
            st = next;
        }
        assert_eq!(st.pos, start);
    }

    #[test]
    fn ball_deflects_to_the_right_on_counterclockwise_platform() {
        let sc = free_scene(1.0);
        let st = PuckState::launched(PuckKind::Ball, Vec3::ZERO, Vec3::X);
        let (next, f) = step_ball(&sc, &st, Vec3::ZERO, DT).unwrap();
        assert!(f.coriolis.y < 0.0);
        assert!(next.vel.y < 0.0);
        assert_eq!(f.haptic_feedback, f.coriolis);
    }

    #[test]
    fn glider_examples() {
        let sc = free_scene(2.0);
        let mut st = PuckState::launched(PuckKind::Glider, Vec3::ZERO, Vec3::X);
        for _ in 0..1000 {
            let (next, f) = step_glider(&sc, &st, Vec3::ZERO, DT).unwrap();
            assert_eq!(f.haptic_feedback, Vec3::ZERO);
            st = next;
        }
        assert_eq!(st.vel, Vec3::X);
        assert!(st.pos.y.abs() < 1e-9);

        let mut st = PuckState::at_rest(PuckKind::Glider, Vec3::ZERO);
        for _ in 0..1000 {
            st = step_glider(&sc, &st, Vec3::new(0.1, 0.0, 0.0), DT).unwrap().0;
        }
        assert!((st.vel.x - 0.2).abs() / 0.2 < 1e-3);
    }

    #[test]
    fn wall_is_inelastic() {
        let sc = CoriolisScene { omega: 0.0, platform_radius: 0.1, ..free_scene(0.0) };
        let mut st = PuckState::launched(PuckKind::Glider, Vec3::ZERO, Vec3::X);
        for _ in 0..500 {
            st = step_glider(&sc, &st, Vec3::ZERO, DT).unwrap().0;
            assert!(st.pos.norm() <= 0.1 + 1e-15);
        }
        assert_eq!(st.vel, Vec3::ZERO);
    }

    #[test]
    fn goal_check_examples() {
        let goal = Goal::on_rim(1.0, 0.0, 0.1);
        let at = |p: Vec3| PuckState::at_rest(PuckKind::Ball, p);
        assert_eq!(goal_check(&at(goal.center), &goal, 1.0), Outcome::Scored);
        assert_eq!(goal_check(&at(Vec3::new(0.0, 1.0, 0.0)), &goal, 1.0), Outcome::Missed);
        assert_eq!(goal_check(&at(Vec3::ZERO), &goal, 1.0), Outcome::InPlay);
    }

    #[test]
    fn attempts_counted_at_launch() {
        let goal = Goal::on_rim(1.0, 0.0, 0.1);
        let mut score = RoundScore::default();
        let slow = PuckState::launched(PuckKind::Ball, Vec3::ZERO, Vec3::new(0.01, 0.0, 0.0));
        assert_eq!(score.observe(&slow, &goal, 1.0), None);
        assert_eq!(score.attempts, 0);
        let fast = PuckState::launched(PuckKind::Ball, Vec3::new(0.5, 0.0, 0.0), Vec3::X);
        assert_eq!(score.observe(&fast, &goal, 1.0), None);
        assert_eq!(score.attempts, 1);
        let there = PuckState::launched(PuckKind::Ball, Vec3::new(0.95, 0.0, 0.0), Vec3::X);
        assert_eq!(score.observe(&there, &goal, 1.0), Some(Outcome::Scored));
        assert_eq!((score.attempts, score.goals), (1, 1));
        assert!(score.armed);
    }

    proptest! {
        #[test]
        fn coriolis_is_perpendicular_to_velocity(
            m in 0.01f64..10.0,
            w in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
            v in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let omega = Vec3::new(w.0, w.1, w.2);
            let vel = Vec3::new(v.0, v.1, v.2);
            let f = coriolis_force(m, omega, vel);
            prop_assert!(f.dot(vel).abs() < 1e-12 * (1.0 + f.norm() * vel.norm()));
        }

        #[test]
        fn reversing_spin_mirrors_trajectory(omega in 0.2f64..4.0, speed in 0.1f64..1.0, steps in 10usize..2000) {
            let run = |w: f64| {
                let sc = free_scene(w);
                let mut st = PuckState::launched(PuckKind::Ball, Vec3::ZERO, Vec3::new(speed, 0.0, 0.0));
                for _ in 0..steps {
                    st = step_ball(&sc, &st, Vec3::ZERO, DT).unwrap().0;
                }
                st
            };
            let (a, b) = (run(omega), run(-omega));
            prop_assert!((a.pos.x - b.pos.x).abs() < 1e-12);
            prop_assert!((a.pos.y + b.pos.y).abs() < 1e-12);
        }
    }
}
