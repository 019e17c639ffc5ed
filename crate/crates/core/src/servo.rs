//! The fixed-rate haptic loop.
//!
//! Each tick samples every device, couples it to its proxy through a
//! spring-damper, advances the active scenario by one fixed step, renders
//! the reaction back to the devices and assembles a snapshot.
//!
//! [`ServoCore`] holds everything that determines the physics and never touches
//! a device or a clock. [`Servo`] adds the devices, and [`run_loop`] adds the
//! scheduling policy.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{is_live_key, ConfigErrors, LabConfig, ScenarioId, Violation};
use crate::device::{Device, DeviceError, DeviceSample, ForceCommand};
use crate::labs::build_scenario;
use crate::math::{clamp_force, MathError, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Spring, N/m.
    pub k: f64,
    /// Damper, N·s/m.
    pub b: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self { k: 400.0, b: 2.0 }
    }
}

impl CouplingParams {
    /// Discrete stability bound for a spring-damper driving mass `m_min` under
    /// semi-implicit Euler: `k·dt ≤ 2·b + 2·m_min/dt`.
    pub fn stability_check(&self, dt: f64, m_min: f64) -> Result<(), String> {
        let lhs = self.k * dt;
        let rhs = 2.0 * self.b + 2.0 * m_min / dt;
        if lhs <= rhs {
            Ok(())
        } else {
            Err(format!(
                "coupling unstable: k*dt = {lhs} exceeds 2*b + 2*m_min/dt = {rhs}"
            ))
        }
    }
}

/// Force the coupling applies to the proxy. The device feels the exact negation.
#[inline]
pub fn coupling_force(
    device_pos: Vec3,
    device_vel: Vec3,
    proxy_pos: Vec3,
    proxy_vel: Vec3,
    params: &CouplingParams,
) -> Vec3 {
    (device_pos - proxy_pos) * params.k + (device_vel - proxy_vel) * params.b
}

/// A labelled force arrow. `vec` is in scene metres: the force times `Snapshot::arrow_scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrow {
    pub origin: Vec3,
    pub vec: Vec3,
    pub label: &'static str,
    pub magnitude_n: f64,
}

impl Arrow {
    pub fn force(label: &'static str, origin: Vec3, force: Vec3, arrow_scale: f64) -> Self {
        Self {
            origin,
            vec: force * arrow_scale,
            label,
            magnitude_n: force.norm(),
        }
    }

    /// Arrow along `dir` (unit) whose magnitude is exactly `|value|`.
    pub fn along(label: &'static str, origin: Vec3, dir: Vec3, value: f64, arrow_scale: f64) -> Self {
        Self {
            origin,
            vec: dir * (value * arrow_scale),
            label,
            magnitude_n: value.abs(),
        }
    }
}

/// Pose of a rendered body: position plus an axis-angle orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Body {
    pub name: &'static str,
    pub pos: Vec3,
    pub axis: Vec3,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub scenario: ScenarioId,
    pub bodies: Vec<Body>,
    pub arrows: Vec<Arrow>,
    pub arrow_scale: f64,
    pub hud: Vec<(&'static str, f64)>,
    pub score: Option<u32>,
    pub flags: Vec<&'static str>,
    pub error: Option<String>,
}

impl Snapshot {
    pub fn new(t: f64, scenario: ScenarioId, arrow_scale: f64) -> Self {
        Self {
            t,
            scenario,
            bodies: Vec::new(),
            arrows: Vec::new(),
            arrow_scale,
            hud: Vec::new(),
            score: None,
            flags: Vec::new(),
            error: None,
        }
    }

    pub fn hud_value(&self, label: &str) -> Option<f64> {
        self.hud.iter().find(|(l, _)| *l == label).map(|(_, v)| *v)
    }

    pub fn arrow(&self, label: &str) -> Option<&Arrow> {
        self.arrows.iter().find(|a| a.label == label)
    }

    pub fn body(&self, name: &str) -> Option<&Body> {
        self.bodies.iter().find(|b| b.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickReport {
    pub tick: u64,
    pub compute_s: f64,
    pub overrun: bool,
}

pub const MAX_DEVICES: usize = 2;

/// What a scenario step hands back to the servo, in each device's own axes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScenarioOutput {
    pub devices: usize,
    /// Coupling force applied to each proxy.
    pub coupling: [Vec3; MAX_DEVICES],
    /// Scenario-specific feedback rendered straight to each device.
    pub direct: [Vec3; MAX_DEVICES],
}

impl ScenarioOutput {
    pub fn new(devices: usize) -> Self {
        Self {
            devices,
            ..Default::default()
        }
    }

    /// Force requested for device `i` before clamping.
    pub fn device_force(&self, i: usize) -> Vec3 {
        -self.coupling[i] + self.direct[i]
    }
}

/// One lab's physics, driven one fixed step at a time.
pub trait Scenario: Send {
    fn id(&self) -> ScenarioId;

    fn device_count(&self) -> usize {
        self.id().device_count()
    }

    /// Projects the samples into the scene, couples, and advances one step.
    fn step(
        &mut self,
        samples: &[DeviceSample],
        coupling: &CouplingParams,
        dt: f64,
    ) -> Result<ScenarioOutput, MathError>;

    /// Render-ready view of the state after the last step.
    fn snapshot(&self, t: f64, arrow_scale: f64) -> Snapshot;

    /// Canonical little-endian serialization of everything that evolves.
    fn write_state(&self, out: &mut Vec<u8>);

    /// Picks up new parameters without resetting the state.
    fn reconfigure(&mut self, config: &LabConfig);

    fn reset(&mut self);
}

/// 64-bit digest of a scenario's canonical state bytes.
pub fn state_hash(scenario: &dyn Scenario) -> u64 {
    let mut buf = Vec::with_capacity(128);
    buf.push(scenario.id().code());
    scenario.write_state(&mut buf);
    let digest = Sha256::digest(&buf);
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// Control input applied at a tick boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlEvent {
    Param { name: String, value: Value },
    Reset,
}

#[derive(Debug, Error)]
pub enum ServoError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("scenario {scenario} needs {expected} device(s), got {got}")]
    DeviceCount {
        scenario: ScenarioId,
        expected: usize,
        got: usize,
    },
}

impl ServoError {
    pub fn is_end_of_input(&self) -> bool {
        matches!(self, ServoError::Device(DeviceError::EndOfInput(_)))
    }
}

#[derive(Clone, Debug)]
pub struct TickResult {
    pub tick: u64,
    pub samples: Vec<DeviceSample>,
    /// Clamped forces, one per device.
    pub commands: Vec<ForceCommand>,
    pub output: ScenarioOutput,
    pub snapshot: Snapshot,
    /// Events applied just before this tick.
    pub events: Vec<ControlEvent>,
}

/// Deterministic heart of the servo: scenario, configuration and tick counter.
pub struct ServoCore {
    config: LabConfig,
    scenario: Box<dyn Scenario>,
    tick: u64,
    fault: Option<String>,
    pending: Vec<ControlEvent>,
}

impl ServoCore {
    pub fn new(config: LabConfig) -> Result<Self, ConfigErrors> {
        config.validate()?;
        let scenario = build_scenario(&config);
        Ok(Self {
            config,
            scenario,
            tick: 0,
            fault: None,
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &LabConfig {
        &self.config
    }

    pub fn scenario(&self) -> &dyn Scenario {
        self.scenario.as_ref()
    }

    pub fn scenario_id(&self) -> ScenarioId {
        self.config.scenario
    }

    /// Index of the next tick to run.
    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    /// Simulated time of the current state.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn state_hash(&self) -> u64 {
        state_hash(self.scenario.as_ref())
    }

    /// Changes one live-tunable parameter. The whole configuration is
    /// re-validated; on failure nothing changes.
    pub fn set_param(&mut self, name: &str, value: &Value) -> Result<(), ConfigErrors> {
        if !is_live_key(name) {
            let message = if crate::config::is_known_key(name) {
                "not live-tunable"
            } else {
                "unknown key"
            };
            return Err(ConfigErrors(vec![Violation {
                key: name.to_string(),
                message: message.to_string(),
            }]));
        }
        let mut candidate = self.config.clone();
        candidate.set(name, value).map_err(|message| {
            ConfigErrors(vec![Violation {
                key: name.to_string(),
                message,
            }])
        })?;
        candidate.validate()?;
        self.config = candidate;
        self.scenario.reconfigure(&self.config);
        self.pending.push(ControlEvent::Param {
            name: name.to_string(),
            value: value.clone(),
        });
        Ok(())
    }

    /// Puts the scenario back in its initial state. The tick counter keeps running.
    pub fn reset(&mut self) {
        self.scenario.reset();
        self.fault = None;
        self.pending.push(ControlEvent::Reset);
    }

    pub fn apply_event(&mut self, event: &ControlEvent) -> Result<(), ConfigErrors> {
        match event {
            ControlEvent::Param { name, value } => self.set_param(name, value),
            ControlEvent::Reset => {
                self.reset();
                Ok(())
            }
        }
    }

    /// Runs one tick against already-sampled device input.
    ///
    /// Returns the clamped force per device. A scenario that hits a numerical
    /// fault stays faulted until reset: it commands zero force and reports the
    /// fault in every snapshot.
    pub fn tick(&mut self, samples: &[DeviceSample]) -> TickResult {
        let dt = self.dt();
        let n = self.scenario.device_count();
        let events = std::mem::take(&mut self.pending);

        let output = if self.fault.is_some() {
            ScenarioOutput::new(n)
        } else if samples.len() < n {
            self.fault = Some(format!("expected {n} device samples, got {}", samples.len()));
            ScenarioOutput::new(n)
        } else {
            match self.scenario.step(samples, &self.config.coupling, dt) {
                Ok(out) => out,
                Err(e) => {
                    self.fault = Some(e.to_string());
                    ScenarioOutput::new(n)
                }
            }
        };

        let max = self.config.clamp_max_force_n;
        let commands = (0..n)
            .map(|i| ForceCommand::new(clamp_force(output.device_force(i), max)))
            .collect();

        let tick = self.tick;
        self.tick += 1;
        let mut snapshot = self.scenario.snapshot(self.time(), self.config.arrow_scale);
        snapshot.error = self.fault.clone();

        TickResult {
            tick,
            samples: samples.to_vec(),
            commands,
            output,
            snapshot,
            events,
        }
    }
}

/// The servo with its devices attached.
pub struct Servo {
    core: ServoCore,
    devices: Vec<Box<dyn Device>>,
}

impl Servo {
    pub fn new(config: LabConfig, devices: Vec<Box<dyn Device>>) -> Result<Self, ServoError> {
        let core = ServoCore::new(config)?;
        let expected = core.scenario.device_count();
        if devices.len() != expected {
            return Err(ServoError::DeviceCount {
                scenario: core.scenario_id(),
                expected,
                got: devices.len(),
            });
        }
        Ok(Self { core, devices })
    }

    pub fn core(&self) -> &ServoCore {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut ServoCore {
        &mut self.core
    }

    /// Swaps in a different scenario and device set, starting from tick 0.
    pub fn switch(&mut self, config: LabConfig, devices: Vec<Box<dyn Device>>) -> Result<(), ServoError> {
        *self = Servo::new(config, devices)?;
        Ok(())
    }

    /// Samples every device, runs the core tick and dispatches the forces.
    pub fn tick(&mut self) -> Result<TickResult, ServoError> {
        let mut samples = Vec::with_capacity(self.devices.len());
        for d in &mut self.devices {
            samples.push(d.sample()?);
        }
        let mut result = self.core.tick(&samples);
        for (d, cmd) in self.devices.iter_mut().zip(result.commands.iter_mut()) {
            match d.command_force(*cmd) {
                Ok(sent) => *cmd = sent,
                Err(e) => {
                    // Zero every output before surfacing the fault.
                    for d in &mut self.devices {
                        let _ = d.command_force(ForceCommand::default());
                    }
                    return Err(e.into());
                }
            }
        }
        Ok(result)
    }
}

/// Decides which ticks publish a snapshot, e.g. 60 of every 1000.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnapshotClock {
    servo_hz: u64,
    snapshot_hz: u64,
}

impl SnapshotClock {
    pub fn new(servo_hz: u32, snapshot_hz: u32) -> Self {
        Self {
            servo_hz: u64::from(servo_hz.max(1)),
            snapshot_hz: u64::from(snapshot_hz.min(servo_hz)),
        }
    }

    pub fn is_due(&self, tick: u64) -> bool {
        (tick + 1) * self.snapshot_hz / self.servo_hz > tick * self.snapshot_hz / self.servo_hz
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Virtual clock only: runs as fast as it can.
    Simulated,
    /// Paced against the wall clock. Late ticks still use the fixed dt.
    Realtime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopControl {
    Continue,
    Stop,
}

/// Observer of the loop. `before_tick` is the tick boundary where commands
/// (parameter changes, resets, scenario switches) may be applied.
pub trait TickHook {
    fn before_tick(&mut self, _servo: &mut Servo) -> LoopControl {
        LoopControl::Continue
    }

    fn after_tick(&mut self, servo: &Servo, result: &TickResult, report: &TickReport) -> LoopControl;
}

impl<F> TickHook for F
where
    F: FnMut(&Servo, &TickResult, &TickReport) -> LoopControl,
{
    fn after_tick(&mut self, servo: &Servo, result: &TickResult, report: &TickReport) -> LoopControl {
        self(servo, result, report)
    }
}

#[derive(Debug)]
pub enum StopReason {
    /// Ran the requested number of ticks.
    Completed,
    EndOfInput,
    /// A hook asked to stop.
    Requested,
    Fault(ServoError),
}

#[derive(Debug)]
pub struct RunSummary {
    pub ticks: u64,
    pub final_t: f64,
    pub stop: StopReason,
    pub overruns: u64,
    pub mean_compute_s: f64,
    pub max_compute_s: f64,
}

impl RunSummary {
    pub fn overrun_fraction(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.overruns as f64 / self.ticks as f64
        }
    }
}

fn wait_until(deadline: Instant) {
    const SPIN: Duration = Duration::from_micros(200);
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN {
            std::thread::sleep(left - SPIN);
        } else {
            std::hint::spin_loop();
        }
    }
}

/// Drives the servo until `max_ticks`, end of input, a hook stop or a fault.
pub fn run_loop(
    servo: &mut Servo,
    policy: Policy,
    max_ticks: Option<u64>,
    hook: &mut dyn TickHook,
) -> RunSummary {
    let dt = servo.core.dt();
    let period = Duration::from_secs_f64(dt);
    let mut schedule_origin = Instant::now();
    let mut scheduled: u64 = 0;
    let mut ticks = 0u64;
    let mut overruns = 0u64;
    let mut compute_total = 0.0;
    let mut compute_max: f64 = 0.0;

    let stop = loop {
        if max_ticks.is_some_and(|m| ticks >= m) {
            break StopReason::Completed;
        }
        if hook.before_tick(servo) == LoopControl::Stop {
            break StopReason::Requested;
        }
        let mut late = Duration::ZERO;
        if policy == Policy::Realtime {
            let deadline = schedule_origin + Duration::from_secs_f64(dt * scheduled as f64);
            wait_until(deadline);
            late = Instant::now().saturating_duration_since(deadline);
        }
        let started = Instant::now();
        let result = servo.tick();
        let compute = started.elapsed();
        let result = match result {
            Ok(r) => r,
            Err(e) if e.is_end_of_input() => break StopReason::EndOfInput,
            Err(e) => break StopReason::Fault(e),
        };

        let overrun = policy == Policy::Realtime && (compute > period || late > period);
        if overrun {
            overruns += 1;
            // Slip the schedule instead of stretching dt.
            schedule_origin = Instant::now();
            scheduled = 0;
        }
        scheduled += 1;
        ticks += 1;
        let compute_s = compute.as_secs_f64();
        compute_total += compute_s;
        compute_max = compute_max.max(compute_s);

        let report = TickReport {
            tick: result.tick,
            compute_s,
            overrun,
        };
        if hook.after_tick(servo, &result, &report) == LoopControl::Stop {
            break StopReason::Requested;
        }
    };

    RunSummary {
        ticks,
        final_t: servo.core.time(),
        stop,
        overruns,
        mean_compute_s: if ticks > 0 { compute_total / ticks as f64 } else { 0.0 },
        max_compute_s: compute_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceDescriptor, ReplayDevice, ScriptedDevice, Waypoint};

    #[test]
    fn coupling_examples() {
        let p = CouplingParams::default();
        assert_eq!(coupling_force(Vec3::ZERO, Vec3::ZERO, Vec3::ZERO, Vec3::ZERO, &p), Vec3::ZERO);
        let f = coupling_force(Vec3::new(0.01, 0.0, 0.0), Vec3::ZERO, Vec3::ZERO, Vec3::ZERO, &p);
        assert!((f - Vec3::new(4.0, 0.0, 0.0)).norm() < 1e-12);
        let f = coupling_force(Vec3::ZERO, Vec3::new(0.5, 0.0, 0.0), Vec3::ZERO, Vec3::ZERO, &p);
        assert_eq!(f, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn stability_guard() {
        let p = CouplingParams::default();
        assert!(p.stability_check(1e-3, 0.1).is_ok());
        let stiff = CouplingParams { k: 1e6, b: 0.0 };
        assert!(stiff.stability_check(1e-3, 0.1).is_err());
    }

    #[test]
    fn snapshot_clock_decimates_to_60hz() {
        let clock = SnapshotClock::new(1000, 60);
        let due: Vec<u64> = (0..1000).filter(|&k| clock.is_due(k)).collect();
        assert_eq!(due.len(), 60);
        for w in due.windows(2) {
            assert!((16..=17).contains(&(w[1] - w[0])), "gap {}", w[1] - w[0]);
        }
        let every = SnapshotClock::new(1000, 1000);
        assert!((0..50).all(|k| every.is_due(k)));
    }

    fn parked_friction_servo(ticks: usize) -> Servo {
        let cfg = LabConfig::default();
        let samples = (0..ticks).map(|k| DeviceSample::at_rest(k as f64 * 1e-3, Vec3::new(0.05, 0.0, 0.0)));
        Servo::new(cfg, vec![Box::new(ReplayDevice::new(DeviceDescriptor::default(), samples))]).unwrap()
    }

    #[test]
    fn simulated_loop_counts_ticks_exactly() {
        let cfg = LabConfig::default();
        let script = vec![Waypoint::new(0.0, Vec3::ZERO), Waypoint::new(5.0, Vec3::ZERO)];
        let dev = ScriptedDevice::new(cfg.device_descriptor(0), script, cfg.dt()).unwrap();
        let mut servo = Servo::new(cfg, vec![Box::new(dev)]).unwrap();
        let mut last_t = -1.0;
        let mut hook = |_: &Servo, r: &TickResult, _: &TickReport| {
            assert!(r.snapshot.t > last_t);
            last_t = r.snapshot.t;
            LoopControl::Continue
        };
        let summary = run_loop(&mut servo, Policy::Simulated, Some(1000), &mut hook);
        assert!(matches!(summary.stop, StopReason::Completed));
        assert_eq!(summary.ticks, 1000);
        assert_eq!(summary.final_t, 1.0);
        assert_eq!(summary.overruns, 0);
    }

    #[test]
    fn end_of_input_stops_cleanly() {
        let mut servo = parked_friction_servo(10);
        let mut hook = |_: &Servo, _: &TickResult, _: &TickReport| LoopControl::Continue;
        let summary = run_loop(&mut servo, Policy::Simulated, Some(100), &mut hook);
        assert!(matches!(summary.stop, StopReason::EndOfInput));
        assert_eq!(summary.ticks, 10);
    }

    #[test]
    fn realtime_loop_keeps_pace() {
        let mut servo = parked_friction_servo(200);
        let mut hook = |_: &Servo, _: &TickResult, _: &TickReport| LoopControl::Continue;
        let started = Instant::now();
        let summary = run_loop(&mut servo, Policy::Realtime, Some(100), &mut hook);
        let wall = started.elapsed().as_secs_f64();
        assert_eq!(summary.ticks, 100);
        // 100 ticks at 1 kHz take at least ~99 ms of wall time.
        assert!(wall >= 0.098, "finished too fast: {wall}");
    }

    #[test]
    fn param_change_validated_and_queued() {
        let mut core = ServoCore::new(LabConfig::default()).unwrap();
        assert!(core.set_param("friction.mu_s", &Value::from(0.2)).is_err());
        assert!(core.set_param("port", &Value::from(1)).is_err());
        assert!(core.set_param("nope", &Value::from(1)).is_err());
        core.set_param("friction.mu_k", &Value::from(0.1)).unwrap();
        core.set_param("friction.mu_s", &Value::from(0.2)).unwrap();
        let r = core.tick(&[DeviceSample::at_rest(0.0, Vec3::ZERO)]);
        assert_eq!(r.events.len(), 2);
        assert_eq!(core.config().friction.mu_s, 0.2);
        let r = core.tick(&[DeviceSample::at_rest(1e-3, Vec3::ZERO)]);
        assert!(r.events.is_empty());
    }

    #[test]
    fn faulted_scenario_commands_zero_force() {
        let mut core = ServoCore::new(LabConfig::default()).unwrap();
        let bad = DeviceSample {
            t: 0.0,
            pos: Vec3::new(f64::NAN, 0.0, 0.0),
            vel: Vec3::ZERO,
            button: true,
        };
        let r = core.tick(&[bad]);
        assert!(r.snapshot.error.is_some());
        assert_eq!(r.commands[0].force, Vec3::ZERO);
        let r = core.tick(&[DeviceSample::at_rest(1e-3, Vec3::ZERO)]);
        assert!(r.snapshot.error.is_some());
        core.reset();
        let r = core.tick(&[DeviceSample::at_rest(2e-3, Vec3::ZERO)]);
        assert!(r.snapshot.error.is_none());
    }

    #[test]
    fn wrong_device_count_rejected() {
        let cfg = LabConfig {
            scenario: ScenarioId::Precession,
            ..Default::default()
        };
        let one: Vec<Box<dyn Device>> = vec![Box::new(ReplayDevice::new(DeviceDescriptor::default(), vec![]))];
        assert!(matches!(Servo::new(cfg, one), Err(ServoError::DeviceCount { expected: 2, .. })));
    }
}
