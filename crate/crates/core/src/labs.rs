//! The three labs as servo scenarios.
//!
//! Coupling is computed in device workspace coordinates: each proxy is mapped
//! into the device workspace by a per-lab scale, so a 1 cm stretch always
//! means the same spring force regardless of scene size. The coupling force is
//! applied to the proxy as-is, in newtons.

use std::f64::consts::PI;

use crate::config::{LabConfig, ScenarioId};
use crate::coriolis::{step_puck, CoriolisScene, Outcome, PuckForces, PuckKind, PuckState, RoundScore};
use crate::device::{DeviceSample, RigMount};
use crate::friction::{
    friction_step, hud_values, AppliedForce, BlockState, ContactMode, ForceBreakdown, FrictionScene,
};
use crate::math::{MathError, Vec3, DEFAULT_V_EPS};
use crate::precession::{gyro_step, handle_reaction, GyroConfig, GyroState, HandleForcePair};
use crate::servo::{coupling_force, Arrow, Body, CouplingParams, Scenario, ScenarioOutput, Snapshot};

/// Cutoff of the low-pass on the hand-imposed axle rotation rate.
pub const AXIS_RATE_CUTOFF_HZ: f64 = 20.0;

pub fn build_scenario(config: &LabConfig) -> Box<dyn Scenario> {
    match config.scenario {
        ScenarioId::Friction => Box::new(FrictionLab::new(config)),
        ScenarioId::Coriolis => Box::new(CoriolisLab::new(config)),
        ScenarioId::Precession => Box::new(PrecessionLab::new(config)),
    }
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn coupled(sample: &DeviceSample, proxy_pos: Vec3, proxy_vel: Vec3, params: &CouplingParams) -> Vec3 {
    if sample.button {
        coupling_force(sample.pos, sample.vel, proxy_pos, proxy_vel, params)
    } else {
        Vec3::ZERO
    }
}

fn check_sample(s: &DeviceSample) -> Result<(), MathError> {
    if s.pos.is_finite() && s.vel.is_finite() {
        Ok(())
    } else {
        Err(MathError::NonFinite {
            what: "device sample",
        })
    }
}

/// Block on the incline. Device x runs up the slope, device y along the
/// outward surface normal.
pub struct FrictionLab {
    scene: FrictionScene,
    state: BlockState,
    breakdown: ForceBreakdown,
    /// Scene metres per device metre.
    scale: f64,
    pointer: Vec3,
    v_eps: f64,
}

impl FrictionLab {
    pub fn new(config: &LabConfig) -> Self {
        let mut lab = Self {
            scene: config.friction_scene(),
            state: BlockState::default(),
            breakdown: ForceBreakdown::default(),
            scale: 1.0,
            pointer: Vec3::ZERO,
            v_eps: DEFAULT_V_EPS,
        };
        lab.reconfigure(config);
        lab.breakdown = lab.resting_breakdown();
        lab
    }

    pub fn state(&self) -> &BlockState {
        &self.state
    }

    pub fn breakdown(&self) -> &ForceBreakdown {
        &self.breakdown
    }

    pub fn scene(&self) -> &FrictionScene {
        &self.scene
    }

    fn resting_breakdown(&self) -> ForceBreakdown {
        let g = self.scene.gravity_tangential();
        ForceBreakdown {
            contact: ContactMode::Stick,
            gravity_tangential: g,
            normal: crate::friction::normal_force(&self.scene, 0.0),
            friction: 0.0,
            applied_tangential: 0.0,
            applied_normal: 0.0,
        }
    }

    fn up_slope(&self) -> Vec3 {
        Vec3::new(self.scene.theta.cos(), self.scene.theta.sin(), 0.0)
    }

    fn outward_normal(&self) -> Vec3 {
        Vec3::new(-self.scene.theta.sin(), self.scene.theta.cos(), 0.0)
    }
}

impl Scenario for FrictionLab {
    fn id(&self) -> ScenarioId {
        ScenarioId::Friction
    }

    fn step(&mut self, samples: &[DeviceSample], coupling: &CouplingParams, dt: f64) -> Result<ScenarioOutput, MathError> {
        let sample = &samples[0];
        check_sample(sample)?;
        let proxy_pos = Vec3::new(self.state.s / self.scale, 0.0, 0.0);
        let proxy_vel = Vec3::new(self.state.v / self.scale, 0.0, 0.0);
        let force = coupled(sample, proxy_pos, proxy_vel, coupling);
        let applied = AppliedForce::new(force.x, force.y);
        let (state, breakdown) = friction_step(&self.scene, &self.state, applied, dt, self.v_eps)?;
        self.state = state;
        self.breakdown = breakdown;
        self.pointer = sample.pos * self.scale;

        let mut out = ScenarioOutput::new(1);
        out.coupling[0] = force;
        Ok(out)
    }

    fn snapshot(&self, t: f64, arrow_scale: f64) -> Snapshot {
        let up = self.up_slope();
        let n = self.outward_normal();
        let block = up * self.state.s;
        let b = &self.breakdown;
        let mut snap = Snapshot::new(t, ScenarioId::Friction, arrow_scale);
        snap.bodies = vec![
            Body { name: "incline", pos: Vec3::ZERO, axis: Vec3::Z, angle: self.scene.theta },
            Body { name: "block", pos: block, axis: Vec3::Z, angle: self.scene.theta },
            Body {
                name: "pointer",
                pos: up * self.pointer.x + n * self.pointer.y + Vec3::Z * self.pointer.z,
                axis: Vec3::Z,
                angle: 0.0,
            },
        ];
        // The normal arrow is the contact force on the block, so it points outward.
        snap.arrows = vec![
            Arrow::along("gravity_tangential", block, up, b.gravity_tangential, arrow_scale),
            Arrow::along("normal", block, n, b.normal, arrow_scale),
            Arrow::along("friction", block, up, b.friction, arrow_scale),
            Arrow::along("applied", block, up, b.applied_tangential, arrow_scale),
        ];
        snap.hud = hud_values(b).to_vec();
        snap.flags.push(match self.state.mode {
            ContactMode::Stick => "stick",
            ContactMode::Slip => "slip",
        });
        snap
    }

    fn write_state(&self, out: &mut Vec<u8>) {
        push_f64(out, self.state.s);
        push_f64(out, self.state.v);
        out.push(match self.state.mode {
            ContactMode::Stick => 0,
            ContactMode::Slip => 1,
        });
    }

    fn reconfigure(&mut self, config: &LabConfig) {
        self.scene = config.friction_scene();
        self.scale = self.scene.track_half_length / config.device_half_extent_m;
    }

    fn reset(&mut self) {
        self.state = BlockState::default();
        self.breakdown = self.resting_breakdown();
        self.pointer = Vec3::ZERO;
    }
}

/// Puck on the spinning platform. Device x/y map onto the platform plane in
/// the rotating frame.
pub struct CoriolisLab {
    scene: CoriolisScene,
    kind: PuckKind,
    state: PuckState,
    forces: PuckForces,
    score: RoundScore,
    /// Platform rotation since start, radians.
    platform_angle: f64,
    scale: f64,
    pointer: Vec3,
}

impl CoriolisLab {
    pub fn new(config: &LabConfig) -> Self {
        let kind = config.coriolis.variant;
        let mut lab = Self {
            scene: config.coriolis_scene(),
            kind,
            state: PuckState::at_rest(kind, Vec3::ZERO),
            forces: PuckForces::default(),
            score: RoundScore::default(),
            platform_angle: 0.0,
            scale: 1.0,
            pointer: Vec3::ZERO,
        };
        lab.reconfigure(config);
        lab
    }

    pub fn state(&self) -> &PuckState {
        &self.state
    }

    pub fn forces(&self) -> &PuckForces {
        &self.forces
    }

    pub fn score(&self) -> &RoundScore {
        &self.score
    }

    fn to_world(&self, v: Vec3) -> Vec3 {
        v.rotated(Vec3::Z, self.platform_angle)
    }
}

impl Scenario for CoriolisLab {
    fn id(&self) -> ScenarioId {
        ScenarioId::Coriolis
    }

    fn step(&mut self, samples: &[DeviceSample], coupling: &CouplingParams, dt: f64) -> Result<ScenarioOutput, MathError> {
        let sample = &samples[0];
        check_sample(sample)?;
        let proxy_pos = self.state.pos / self.scale;
        let proxy_vel = self.state.vel / self.scale;
        let force = coupled(sample, proxy_pos, proxy_vel, coupling);
        let (next, forces) = step_puck(&self.scene, &self.state, force, dt)?;
        self.state = next;
        self.forces = forces;
        self.platform_angle = (self.platform_angle + self.scene.omega * dt).rem_euclid(2.0 * PI);
        self.pointer = sample.pos * self.scale;
        if self
            .score
            .observe(&self.state, &self.scene.goal, self.scene.platform_radius)
            .is_some()
        {
            self.state = PuckState::at_rest(self.kind, Vec3::ZERO);
        }

        let mut out = ScenarioOutput::new(1);
        out.coupling[0] = force;
        out.direct[0] = forces.haptic_feedback;
        Ok(out)
    }

    fn snapshot(&self, t: f64, arrow_scale: f64) -> Snapshot {
        let puck = self.to_world(self.state.pos);
        let f = &self.forces;
        let mut snap = Snapshot::new(t, ScenarioId::Coriolis, arrow_scale);
        snap.bodies = vec![
            Body { name: "platform", pos: Vec3::ZERO, axis: Vec3::Z, angle: self.platform_angle },
            Body { name: "puck", pos: puck, axis: Vec3::Z, angle: 0.0 },
            Body { name: "goal", pos: self.to_world(self.scene.goal.center), axis: Vec3::Z, angle: 0.0 },
            Body { name: "pointer", pos: self.to_world(self.pointer), axis: Vec3::Z, angle: 0.0 },
        ];
        let arrow = |label, force: Vec3| Arrow {
            magnitude_n: force.norm(),
            ..Arrow::force(label, puck, self.to_world(force), arrow_scale)
        };
        snap.arrows = vec![arrow("applied", f.applied), arrow("coriolis", f.coriolis)];
        if self.kind == PuckKind::Ball {
            snap.arrows.push(arrow("drag", f.drag));
        }
        if self.scene.centrifugal_enabled && self.kind == PuckKind::Ball {
            snap.arrows.push(arrow("centrifugal", f.centrifugal));
        }
        snap.hud = vec![
            ("coriolis", f.coriolis.norm()),
            ("applied", f.applied.norm()),
            ("speed", self.state.vel.norm()),
            ("omega", self.scene.omega),
            ("attempts", f64::from(self.score.attempts)),
            ("goals", f64::from(self.score.goals)),
        ];
        snap.score = Some(self.score.goals);
        snap.flags.push(match self.kind {
            PuckKind::Ball => "ball",
            PuckKind::Glider => "glider",
        });
        snap.flags.push(match self.score.last_outcome {
            Outcome::Scored => "scored",
            Outcome::Missed => "missed",
            Outcome::InPlay => "in_play",
        });
        snap
    }

    fn write_state(&self, out: &mut Vec<u8>) {
        self.state.pos.write_le(out);
        self.state.vel.write_le(out);
        push_f64(out, self.platform_angle);
        out.extend_from_slice(&self.score.attempts.to_le_bytes());
        out.extend_from_slice(&self.score.goals.to_le_bytes());
        out.push(self.score.armed as u8);
    }

    fn reconfigure(&mut self, config: &LabConfig) {
        self.scene = config.coriolis_scene();
        self.scale = self.scene.platform_radius / config.device_half_extent_m;
    }

    fn reset(&mut self) {
        self.state = PuckState::at_rest(self.kind, Vec3::ZERO);
        self.forces = PuckForces::default();
        self.score = RoundScore::default();
        self.platform_angle = 0.0;
        self.pointer = Vec3::ZERO;
    }
}

/// Gyroscope held by two facing devices, one per handle.
pub struct PrecessionLab {
    cfg: GyroConfig,
    state: GyroState,
    mount: RigMount,
    dt: f64,
    alpha: f64,
    /// Filtered rotation rate of the line joining the two hands.
    hand_rate: Vec3,
    prev_midline: Option<Vec3>,
    /// Angular velocity of the axle on the last step.
    axis_rate: Vec3,
    torque_perp: Vec3,
    free_rod: bool,
    coupling: HandleForcePair,
    reaction: HandleForcePair,
    hands: [Vec3; 2],
}

impl PrecessionLab {
    pub fn new(config: &LabConfig) -> Self {
        let cfg = config.gyro_config();
        let dt = config.dt();
        let tau = 1.0 / (2.0 * PI * AXIS_RATE_CUTOFF_HZ);
        let mut lab = Self {
            cfg,
            state: GyroState::new(Vec3::X, cfg.spin_rate),
            mount: RigMount::for_handles(cfg.handle_half_length),
            dt,
            alpha: dt / (dt + tau),
            hand_rate: Vec3::ZERO,
            prev_midline: None,
            axis_rate: Vec3::ZERO,
            torque_perp: Vec3::ZERO,
            free_rod: false,
            coupling: HandleForcePair::default(),
            reaction: HandleForcePair::default(),
            hands: [Vec3::ZERO; 2],
        };
        lab.reset();
        lab
    }

    pub fn state(&self) -> &GyroState {
        &self.state
    }

    pub fn config(&self) -> &GyroConfig {
        &self.cfg
    }

    fn track_hands(&mut self, left: &DeviceSample, right: &DeviceSample) {
        if !(left.button && right.button) {
            self.prev_midline = None;
            self.hand_rate = Vec3::ZERO;
            return;
        }
        let Some(u) = (right.pos - left.pos).try_normalize() else {
            return;
        };
        if let Some(prev) = self.prev_midline {
            let raw = prev.cross(u) / self.dt;
            self.hand_rate = self.hand_rate + (raw - self.hand_rate) * self.alpha;
        }
        self.prev_midline = Some(u);
    }
}

impl Scenario for PrecessionLab {
    fn id(&self) -> ScenarioId {
        ScenarioId::Precession
    }

    fn step(&mut self, samples: &[DeviceSample], coupling: &CouplingParams, dt: f64) -> Result<ScenarioOutput, MathError> {
        check_sample(&samples[0])?;
        check_sample(&samples[1])?;
        let left = self.mount.left_to_world(samples[0]);
        let right = self.mount.right_to_world(samples[1]);
        self.hands = [left.pos, right.pos];

        let arm = self.state.axis * self.cfg.handle_half_length;
        let arm_vel = self.axis_rate.cross(arm);
        let on_left = coupled(&left, -arm, -arm_vel, coupling);
        let on_right = coupled(&right, arm, arm_vel, coupling);
        self.coupling = HandleForcePair { left: on_left, right: on_right };

        self.track_hands(&left, &right);
        self.reaction = handle_reaction(&self.cfg, &self.state, self.hand_rate);

        let step = gyro_step(&self.cfg, &self.state, &self.coupling, dt).map_err(|e| match e {
            crate::precession::GyroError::Math(m) => m,
            _ => MathError::NonFinite { what: "gyro state" },
        })?;
        self.state = step.state;
        self.axis_rate = step.axis_rate;
        self.torque_perp = step.torque_perp;
        self.free_rod = step.free_rod;

        let mut out = ScenarioOutput::new(2);
        out.coupling[0] = on_left;
        out.coupling[1] = RigMount::right_force_to_local(on_right);
        out.direct[0] = self.reaction.left;
        out.direct[1] = RigMount::right_force_to_local(self.reaction.right);
        Ok(out)
    }

    fn snapshot(&self, t: f64, arrow_scale: f64) -> Snapshot {
        let d = self.cfg.handle_half_length;
        let axis = self.state.axis;
        let l = self.state.angular_momentum(&self.cfg);
        let mut snap = Snapshot::new(t, ScenarioId::Precession, arrow_scale);
        snap.bodies = vec![
            Body { name: "wheel", pos: Vec3::ZERO, axis, angle: 0.0 },
            Body { name: "left_handle", pos: axis * -d, axis, angle: 0.0 },
            Body { name: "right_handle", pos: axis * d, axis, angle: 0.0 },
            Body { name: "left_pointer", pos: self.hands[0], axis: Vec3::Z, angle: 0.0 },
            Body { name: "right_pointer", pos: self.hands[1], axis: Vec3::Z, angle: 0.0 },
        ];
        snap.arrows = vec![
            Arrow::force("angular_momentum", Vec3::ZERO, l, arrow_scale),
            Arrow::force("torque", Vec3::ZERO, self.torque_perp, arrow_scale),
            Arrow::force("left_reaction", axis * -d, self.reaction.left, arrow_scale),
            Arrow::force("right_reaction", axis * d, self.reaction.right, arrow_scale),
        ];
        snap.hud = vec![
            ("spin_rate", self.state.spin_rate),
            ("angular_momentum", l.norm()),
            ("torque", self.torque_perp.norm()),
            ("precession_rate", self.axis_rate.norm()),
            ("handle_force", self.reaction.right.norm()),
        ];
        if self.free_rod || l.norm() == 0.0 {
            snap.flags.push("no_gyroscopic_stiffness");
        }
        snap
    }

    fn write_state(&self, out: &mut Vec<u8>) {
        self.state.axis.write_le(out);
        push_f64(out, self.state.spin_rate);
        self.axis_rate.write_le(out);
        self.hand_rate.write_le(out);
        match self.prev_midline {
            Some(m) => {
                out.push(1);
                m.write_le(out);
            }
            None => out.push(0),
        }
    }

    fn reconfigure(&mut self, config: &LabConfig) {
        self.cfg = config.gyro_config();
        self.state.spin_rate = self.cfg.spin_rate;
        self.mount = RigMount::for_handles(self.cfg.handle_half_length);
    }

    fn reset(&mut self) {
        self.state = GyroState::new(Vec3::X, self.cfg.spin_rate);
        self.hand_rate = Vec3::ZERO;
        self.prev_midline = None;
        self.axis_rate = Vec3::ZERO;
        self.torque_perp = Vec3::ZERO;
        self.free_rod = false;
        self.coupling = HandleForcePair::default();
        self.reaction = HandleForcePair::default();
        self.hands = [self.mount.left_rest, self.mount.right_rest];
    }
}
