//! The haptic device boundary: position and velocity in, clamped force out.
//!
//! No hardware drivers live here. The scripted, replay and pointer devices
//! stand in for a hand on a force-feedback stylus and honour the same
//! contract a real driver would.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{clamp_force, Vec3, DEFAULT_MAX_FORCE_N};

pub const DEFAULT_HALF_EXTENT_M: f64 = 0.06;
/// Cutoff of the first-order low-pass applied to finite-differenced velocity.
pub const VELOCITY_CUTOFF_HZ: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    /// The input stream is exhausted. Not a crash: the loop stops cleanly.
    #[error("device {0}: end of input")]
    EndOfInput(u8),
    #[error("device {0}: disconnected")]
    Disconnected(u8),
    /// A command arrived after the device stopped producing input.
    #[error("device {0}: paused after end of input")]
    Paused(u8),
    #[error("device configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub id: u8,
    /// Reachable half-extent of the end effector per axis, metres.
    pub workspace_half_extent: Vec3,
    pub max_force_n: f64,
}

impl Default for DeviceDescriptor {
    fn default() -> Self {
        Self::new(0)
    }
}

impl DeviceDescriptor {
    pub fn new(id: u8) -> Self {
        Self {
            id,
            workspace_half_extent: Vec3::new(
                DEFAULT_HALF_EXTENT_M,
                DEFAULT_HALF_EXTENT_M,
                DEFAULT_HALF_EXTENT_M,
            ),
            max_force_n: DEFAULT_MAX_FORCE_N,
        }
    }

    pub fn with_max_force(mut self, max_force_n: f64) -> Self {
        self.max_force_n = max_force_n;
        self
    }

    pub fn with_half_extent(mut self, half_extent: f64) -> Self {
        self.workspace_half_extent = Vec3::new(half_extent, half_extent, half_extent);
        self
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let e = self.workspace_half_extent;
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0 && e.is_finite()) {
            return Err(DeviceError::Config(
                "workspace half extents must be > 0".into(),
            ));
        }
        if !(self.max_force_n > 0.0 && self.max_force_n.is_finite()) {
            return Err(DeviceError::Config("max_force_n must be > 0".into()));
        }
        Ok(())
    }

    pub fn clamp_to_workspace(&self, p: Vec3) -> Vec3 {
        let e = self.workspace_half_extent;
        Vec3::new(
            p.x.clamp(-e.x, e.x),
            p.y.clamp(-e.y, e.y),
            p.z.clamp(-e.z, e.z),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSample {
    pub t: f64,
    pub pos: Vec3,
    pub vel: Vec3,
    pub button: bool,
}

impl DeviceSample {
    pub fn at_rest(t: f64, pos: Vec3) -> Self {
        Self {
            t,
            pos,
            vel: Vec3::ZERO,
            button: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceCommand {
    pub force: Vec3,
}

impl ForceCommand {
    pub fn new(force: Vec3) -> Self {
        Self { force }
    }
}

/// Anything that can stand at the haptic boundary.
///
/// `sample` advances the device by one servo tick. `command_force` returns the
/// force actually dispatched, which is the request clamped to the device limit.
pub trait Device: Send {
    fn descriptor(&self) -> &DeviceDescriptor;
    fn sample(&mut self) -> Result<DeviceSample, DeviceError>;
    fn command_force(&mut self, cmd: ForceCommand) -> Result<ForceCommand, DeviceError>;
}

/// Backward difference followed by a first-order low-pass.
#[derive(Clone, Debug)]
pub struct VelocityEstimator {
    dt: f64,
    alpha: f64,
    prev: Option<Vec3>,
    vel: Vec3,
}

impl VelocityEstimator {
    pub fn new(dt: f64, cutoff_hz: f64) -> Self {
        let tau = 1.0 / (2.0 * PI * cutoff_hz);
        Self {
            dt,
            alpha: dt / (dt + tau),
            prev: None,
            vel: Vec3::ZERO,
        }
    }

    pub fn update(&mut self, pos: Vec3) -> Vec3 {
        if let Some(prev) = self.prev {
            let raw = (pos - prev) / self.dt;
            self.vel = self.vel + (raw - self.vel) * self.alpha;
        }
        self.prev = Some(pos);
        self.vel
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.vel = Vec3::ZERO;
    }
}

fn default_button() -> bool {
    true
}

/// One point of a scripted hand trajectory. `button` defaults to held.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub pos: Vec3,
    #[serde(default = "default_button")]
    pub button: bool,
}

impl Waypoint {
    pub fn new(t: f64, pos: Vec3) -> Self {
        Self {
            t,
            pos,
            button: true,
        }
    }
}

pub fn validate_script(script: &[Waypoint]) -> Result<(), DeviceError> {
    if script.is_empty() {
        return Err(DeviceError::Config("script has no waypoints".into()));
    }
    for (i, w) in script.iter().enumerate() {
        if !w.t.is_finite() || !w.pos.is_finite() {
            return Err(DeviceError::Config(format!(
                "waypoint {i} has a non-finite value"
            )));
        }
    }
    for (i, pair) in script.windows(2).enumerate() {
        if pair[1].t <= pair[0].t {
            return Err(DeviceError::Config(format!(
                "waypoint times must be strictly increasing (waypoint {} at t={} follows t={})",
                i + 1,
                pair[1].t,
                pair[0].t
            )));
        }
    }
    Ok(())
}

/// Parses the JSON script format: `[{"t": 0.0, "pos": [x, y, z]}, ...]`.
pub fn parse_script(json: &str) -> Result<Vec<Waypoint>, DeviceError> {
    let script: Vec<Waypoint> =
        serde_json::from_str(json).map_err(|e| DeviceError::Config(format!("script: {e}")))?;
    validate_script(&script)?;
    Ok(script)
}

/// Piecewise-linear position of a script at time `t`, clamped to the workspace.
///
/// The boundary waypoint is held before the first and after the last time.
/// `vel` is the slope of the active segment (zero while holding).
pub fn scripted_device_step(
    script: &[Waypoint],
    t: f64,
    descriptor: &DeviceDescriptor,
) -> Result<DeviceSample, DeviceError> {
    validate_script(script)?;
    let first = script[0];
    let last = script[script.len() - 1];
    let (pos, vel, button) = if t <= first.t {
        (first.pos, Vec3::ZERO, first.button)
    } else if t >= last.t {
        (last.pos, Vec3::ZERO, last.button)
    } else {
        // First waypoint strictly after t.
        let hi = script.partition_point(|w| w.t <= t);
        let (a, b) = (script[hi - 1], script[hi]);
        let span = b.t - a.t;
        let frac = (t - a.t) / span;
        (
            a.pos + (b.pos - a.pos) * frac,
            (b.pos - a.pos) / span,
            a.button,
        )
    };
    Ok(DeviceSample {
        t,
        pos: descriptor.clamp_to_workspace(pos),
        vel,
        button,
    })
}

/// Deterministic stand-in for a hand: replays a waypoint script at servo rate.
///
/// By default the device reports end of input once simulated time passes the
/// last waypoint. `holding()` keeps it alive at the final pose forever.
#[derive(Clone, Debug)]
pub struct ScriptedDevice {
    descriptor: DeviceDescriptor,
    script: Vec<Waypoint>,
    dt: f64,
    tick: u64,
    hold: bool,
    filter: VelocityEstimator,
    last_command: ForceCommand,
}

impl ScriptedDevice {
    pub fn new(
        descriptor: DeviceDescriptor,
        script: Vec<Waypoint>,
        dt: f64,
    ) -> Result<Self, DeviceError> {
        descriptor.validate()?;
        validate_script(&script)?;
        Ok(Self {
            descriptor,
            script,
            dt,
            tick: 0,
            hold: false,
            filter: VelocityEstimator::new(dt, VELOCITY_CUTOFF_HZ),
            last_command: ForceCommand::default(),
        })
    }

    pub fn holding(mut self) -> Self {
        self.hold = true;
        self
    }

    pub fn last_command(&self) -> ForceCommand {
        self.last_command
    }

    pub fn script(&self) -> &[Waypoint] {
        &self.script
    }
}

impl Device for ScriptedDevice {
    fn descriptor(&self) -> &DeviceDescriptor {
        &self.descriptor
    }

    fn sample(&mut self) -> Result<DeviceSample, DeviceError> {
        let t = self.tick as f64 * self.dt;
        let end = self.script[self.script.len() - 1].t;
        if !self.hold && t > end {
            return Err(DeviceError::EndOfInput(self.descriptor.id));
        }
        let mut s = scripted_device_step(&self.script, t, &self.descriptor)?;
        s.vel = self.filter.update(s.pos);
        self.tick += 1;
        Ok(s)
    }

    fn command_force(&mut self, cmd: ForceCommand) -> Result<ForceCommand, DeviceError> {
        let out = ForceCommand::new(clamp_force(cmd.force, self.descriptor.max_force_n));
        self.last_command = out;
        Ok(out)
    }
}

/// Plays back a recorded sample stream verbatim, then signals end of input.
#[derive(Clone, Debug)]
pub struct ReplayDevice {
    descriptor: DeviceDescriptor,
    samples: VecDeque<DeviceSample>,
    ended: bool,
    commands: Vec<ForceCommand>,
}

impl ReplayDevice {
    pub fn new(descriptor: DeviceDescriptor, samples: impl IntoIterator<Item = DeviceSample>) -> Self {
        Self {
            descriptor,
            samples: samples.into_iter().collect(),
            ended: false,
            commands: Vec::new(),
        }
    }

    /// Forces dispatched so far, after clamping.
    pub fn commands(&self) -> &[ForceCommand] {
        &self.commands
    }
}

impl Device for ReplayDevice {
    fn descriptor(&self) -> &DeviceDescriptor {
        &self.descriptor
    }

    fn sample(&mut self) -> Result<DeviceSample, DeviceError> {
        match self.samples.pop_front() {
            Some(s) => Ok(s),
            None => {
                self.ended = true;
                Err(DeviceError::EndOfInput(self.descriptor.id))
            }
        }
    }

    fn command_force(&mut self, cmd: ForceCommand) -> Result<ForceCommand, DeviceError> {
        if self.ended {
            return Err(DeviceError::Paused(self.descriptor.id));
        }
        let out = ForceCommand::new(clamp_force(cmd.force, self.descriptor.max_force_n));
        self.commands.push(out);
        Ok(out)
    }
}

/// Latest-wins slot written by the network layer and drained by the servo loop.
///
/// The lock is held only for the copy in or out, never across a tick.
#[derive(Clone, Debug, Default)]
pub struct PointerMailbox {
    slot: Arc<Mutex<Option<Vec3>>>,
}

impl PointerMailbox {
    pub fn new() -> Self {
        Self::default()
    }

    /// Posts a normalized pointer position; components are clamped to [-1, 1].
    pub fn post(&self, normalized: Vec3) {
        let p = Vec3::new(
            normalized.x.clamp(-1.0, 1.0),
            normalized.y.clamp(-1.0, 1.0),
            normalized.z.clamp(-1.0, 1.0),
        );
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(p);
    }

    pub fn take(&self) -> Option<Vec3> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

/// Maps a normalized `[-1, 1]^3` pointer onto the device workspace.
pub fn pointer_to_workspace(normalized: Vec3, descriptor: &DeviceDescriptor) -> Vec3 {
    let e = descriptor.workspace_half_extent;
    Vec3::new(
        normalized.x.clamp(-1.0, 1.0) * e.x,
        normalized.y.clamp(-1.0, 1.0) * e.y,
        normalized.z.clamp(-1.0, 1.0) * e.z,
    )
}

/// A device fed by the browser pointer. Missing updates hold the last position.
///
/// The button reads as released until the first pointer message arrives, so an
/// idle client leaves the proxy alone.
#[derive(Debug)]
pub struct PointerDevice {
    descriptor: DeviceDescriptor,
    mailbox: PointerMailbox,
    dt: f64,
    tick: u64,
    pos: Vec3,
    engaged: bool,
    filter: VelocityEstimator,
    last_command: ForceCommand,
}

impl PointerDevice {
    pub fn new(descriptor: DeviceDescriptor, mailbox: PointerMailbox, dt: f64) -> Self {
        Self {
            descriptor,
            mailbox,
            dt,
            tick: 0,
            pos: Vec3::ZERO,
            engaged: false,
            filter: VelocityEstimator::new(dt, VELOCITY_CUTOFF_HZ),
            last_command: ForceCommand::default(),
        }
    }

    pub fn last_command(&self) -> ForceCommand {
        self.last_command
    }
}

impl Device for PointerDevice {
    fn descriptor(&self) -> &DeviceDescriptor {
        &self.descriptor
    }

    fn sample(&mut self) -> Result<DeviceSample, DeviceError> {
        if let Some(p) = self.mailbox.take() {
            self.pos = pointer_to_workspace(p, &self.descriptor);
            self.engaged = true;
        }
        let t = self.tick as f64 * self.dt;
        self.tick += 1;
        Ok(DeviceSample {
            t,
            pos: self.pos,
            vel: self.filter.update(self.pos),
            button: self.engaged,
        })
    }

    fn command_force(&mut self, cmd: ForceCommand) -> Result<ForceCommand, DeviceError> {
        let out = ForceCommand::new(clamp_force(cmd.force, self.descriptor.max_force_n));
        self.last_command = out;
        Ok(out)
    }
}

/// Mounting of two devices facing each other across the gyroscope handles.
///
/// The right device is turned around, so its local x-axis points along world -x.
/// Each device's workspace origin sits at its handle rest position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigMount {
    pub left_rest: Vec3,
    pub right_rest: Vec3,
}

impl RigMount {
    pub fn for_handles(handle_half_length: f64) -> Self {
        Self {
            left_rest: Vec3::new(-handle_half_length, 0.0, 0.0),
            right_rest: Vec3::new(handle_half_length, 0.0, 0.0),
        }
    }

    /// The mirror is its own inverse, so this maps both local→world and world→local.
    #[inline]
    pub fn mirror(v: Vec3) -> Vec3 {
        Vec3::new(-v.x, v.y, v.z)
    }

    pub fn left_to_world(&self, s: DeviceSample) -> DeviceSample {
        DeviceSample {
            pos: self.left_rest + s.pos,
            ..s
        }
    }

    pub fn right_to_world(&self, s: DeviceSample) -> DeviceSample {
        DeviceSample {
            pos: self.right_rest + Self::mirror(s.pos),
            vel: Self::mirror(s.vel),
            ..s
        }
    }

    /// World-frame force on the right handle expressed in the right device's axes.
    pub fn right_force_to_local(f: Vec3) -> Vec3 {
        Self::mirror(f)
    }
}

/// Two devices sampled together on one servo tick.
pub struct DualRig {
    pub left: Box<dyn Device>,
    pub right: Box<dyn Device>,
    pub mount: RigMount,
}

impl DualRig {
    pub fn new(left: Box<dyn Device>, right: Box<dyn Device>, mount: RigMount) -> Self {
        Self { left, right, mount }
    }
}

/// Samples both hands and expresses them in the shared world frame.
///
/// Either device ending ends the rig. Both samples carry the left device's
/// timestamp so they belong to the same servo tick.
pub fn dual_rig_sample(rig: &mut DualRig) -> Result<(DeviceSample, DeviceSample), DeviceError> {
    let left = rig.left.sample();
    let right = rig.right.sample();
    let (left, right) = (left?, right?);
    let t = left.t;
    let l = rig.mount.left_to_world(left);
    let r = DeviceSample {
        t,
        ..rig.mount.right_to_world(right)
    };
    Ok((l, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_script() -> Vec<Waypoint> {
        vec![
            Waypoint::new(0.0, Vec3::ZERO),
            Waypoint::new(1.0, Vec3::new(0.02, 0.0, 0.0)),
        ]
    }

    #[test]
    fn interpolates_waypoints() {
        let d = DeviceDescriptor::default();
        let s = scripted_device_step(&ramp_script(), 0.5, &d).unwrap();
        assert!((s.pos - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
        let s = scripted_device_step(&ramp_script(), 2.0, &d).unwrap();
        assert_eq!(s.pos, Vec3::new(0.02, 0.0, 0.0));
        let s = scripted_device_step(&ramp_script(), -1.0, &d).unwrap();
        assert_eq!(s.pos, Vec3::ZERO);
    }

    #[test]
    fn single_waypoint_holds() {
        let d = DeviceDescriptor::default();
        let script = [Waypoint::new(0.3, Vec3::new(0.01, -0.01, 0.0))];
        for t in [0.0, 0.3, 7.0] {
            assert_eq!(scripted_device_step(&script, t, &d).unwrap().pos, script[0].pos);
        }
    }

    #[test]
    fn empty_or_unordered_script_is_config_error() {
        let d = DeviceDescriptor::default();
        assert!(matches!(
            scripted_device_step(&[], 0.0, &d),
            Err(DeviceError::Config(_))
        ));
        let bad = [Waypoint::new(1.0, Vec3::ZERO), Waypoint::new(1.0, Vec3::X)];
        assert!(validate_script(&bad).is_err());
    }

    #[test]
    fn script_positions_clamped_to_workspace() {
        let d = DeviceDescriptor::default();
        let script = [Waypoint::new(0.0, Vec3::new(0.5, -0.5, 0.01))];
        let s = scripted_device_step(&script, 0.0, &d).unwrap();
        assert_eq!(s.pos, Vec3::new(0.06, -0.06, 0.01));
    }

    #[test]
    fn parses_script_json() {
        let s = parse_script(r#"[{"t":0,"pos":[0,0,0]},{"t":1,"pos":[0.02,0,0],"button":false}]"#)
            .unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].button);
        assert!(!s[1].button);
        assert!(parse_script("[]").is_err());
        assert!(parse_script("{").is_err());
    }

    #[test]
    fn scripted_device_at_rest_has_zero_velocity() {
        let script = vec![Waypoint::new(0.0, Vec3::new(0.01, 0.0, 0.0)), Waypoint::new(1.0, Vec3::new(0.01, 0.0, 0.0))];
        let mut dev = ScriptedDevice::new(DeviceDescriptor::default(), script, 1e-3).unwrap();
        for _ in 0..100 {
            let s = dev.sample().unwrap();
            assert_eq!(s.pos, Vec3::new(0.01, 0.0, 0.0));
            assert_eq!(s.vel, Vec3::ZERO);
        }
    }

    #[test]
    fn ramp_velocity_settles_to_slope() {
        let mut dev = ScriptedDevice::new(DeviceDescriptor::default(), ramp_script(), 1e-3).unwrap();
        let mut last = None;
        for _ in 0..=1000 {
            last = Some(dev.sample().unwrap());
        }
        let s = last.unwrap();
        assert!((s.t - 1.0).abs() < 1e-12);
        // Five filter time constants (~16 ms) are long past.
        assert!((s.vel.x - 0.02).abs() < 1e-9, "vel {}", s.vel.x);
        assert!(matches!(dev.sample(), Err(DeviceError::EndOfInput(0))));
    }

    #[test]
    fn timestamps_step_by_dt() {
        let dt = 1e-3;
        let mut dev = ScriptedDevice::new(DeviceDescriptor::default(), ramp_script(), dt).unwrap();
        let ts: Vec<f64> = (0..50).map(|_| dev.sample().unwrap().t).collect();
        for (k, t) in ts.iter().enumerate() {
            assert_eq!(*t, k as f64 * dt);
        }
        for w in ts.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn scripted_device_is_bitwise_deterministic() {
        let run = || {
            let mut dev = ScriptedDevice::new(DeviceDescriptor::default(), ramp_script(), 1e-3).unwrap();
            (0..500).map(|_| dev.sample().unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pos.to_array().map(f64::to_bits), y.pos.to_array().map(f64::to_bits));
            assert_eq!(x.vel.to_array().map(f64::to_bits), y.vel.to_array().map(f64::to_bits));
        }
    }

    #[test]
    fn replay_plays_log_then_ends() {
        let log: Vec<DeviceSample> = (0..3)
            .map(|k| DeviceSample::at_rest(k as f64 * 1e-3, Vec3::new(k as f64 * 0.001, 0.0, 0.0)))
            .collect();
        let mut dev = ReplayDevice::new(DeviceDescriptor::default(), log.clone());
        for expected in &log {
            assert_eq!(dev.sample().unwrap(), *expected);
        }
        assert_eq!(dev.sample(), Err(DeviceError::EndOfInput(0)));
        assert_eq!(
            dev.command_force(ForceCommand::default()),
            Err(DeviceError::Paused(0))
        );
    }

    #[test]
    fn commands_are_clamped_and_logged() {
        let mut dev = ReplayDevice::new(DeviceDescriptor::default(), vec![DeviceSample::at_rest(0.0, Vec3::ZERO)]);
        dev.sample().unwrap();
        let zero = dev.command_force(ForceCommand::default()).unwrap();
        assert_eq!(zero.force, Vec3::ZERO);
        let big = dev.command_force(ForceCommand::new(Vec3::new(12.0, 0.0, 0.0))).unwrap();
        assert_eq!(big.force, Vec3::new(8.0, 0.0, 0.0));
        assert_eq!(dev.commands(), &[zero, big]);
    }

    #[test]
    fn pointer_maps_linearly_and_holds_last() {
        let mailbox = PointerMailbox::new();
        let mut dev = PointerDevice::new(DeviceDescriptor::default(), mailbox.clone(), 1e-3);
        let idle = dev.sample().unwrap();
        assert!(!idle.button);
        mailbox.post(Vec3::new(1.0, 0.0, 0.0));
        let s = dev.sample().unwrap();
        assert_eq!(s.pos, Vec3::new(0.06, 0.0, 0.0));
        assert!(s.button);
        // No new message: same position.
        assert_eq!(dev.sample().unwrap().pos, Vec3::new(0.06, 0.0, 0.0));
        // Latest wins, out-of-range clamped.
        mailbox.post(Vec3::new(0.5, 0.0, 0.0));
        mailbox.post(Vec3::new(-3.0, 0.5, 0.0));
        assert_eq!(dev.sample().unwrap().pos, Vec3::new(-0.06, 0.03, 0.0));
    }

    fn parked(id: u8, pos: Vec3, n: usize) -> Box<dyn Device> {
        let samples = (0..n).map(|k| DeviceSample::at_rest(k as f64 * 1e-3, pos));
        Box::new(ReplayDevice::new(DeviceDescriptor::new(id), samples))
    }

    #[test]
    fn rig_rest_pose_is_handle_positions() {
        let mut rig = DualRig::new(parked(0, Vec3::ZERO, 1), parked(1, Vec3::ZERO, 1), RigMount::for_handles(0.15));
        let (l, r) = dual_rig_sample(&mut rig).unwrap();
        assert_eq!(l.pos, Vec3::new(-0.15, 0.0, 0.0));
        assert_eq!(r.pos, Vec3::new(0.15, 0.0, 0.0));
    }

    #[test]
    fn rig_mirrors_right_device() {
        let mut rig = DualRig::new(
            parked(0, Vec3::ZERO, 1),
            parked(1, Vec3::new(0.01, 0.0, 0.0), 1),
            RigMount::for_handles(0.15),
        );
        let (_, r) = dual_rig_sample(&mut rig).unwrap();
        assert!((r.pos - Vec3::new(0.15 - 0.01, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rig_ends_when_either_side_ends() {
        let mut rig = DualRig::new(parked(0, Vec3::ZERO, 3), parked(1, Vec3::ZERO, 10), RigMount::for_handles(0.15));
        for _ in 0..3 {
            dual_rig_sample(&mut rig).unwrap();
        }
        assert_eq!(dual_rig_sample(&mut rig), Err(DeviceError::EndOfInput(0)));
    }
}
