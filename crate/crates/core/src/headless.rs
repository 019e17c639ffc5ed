//! Headless runs: scripted or replayed input on the virtual clock.

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::config::LabConfig;
use crate::device::{parse_script, validate_script, Device, DeviceError, ScriptedDevice, Waypoint};
use crate::math::Vec3;
use crate::servo::{
    run_loop, LoopControl, Policy, Servo, ServoError, StopReason, TickHook, TickReport, TickResult,
};
use crate::session::{Recorder, SessionError, SessionLog};

#[derive(Debug, Error)]
pub enum HeadlessError {
    #[error(transparent)]
    Servo(#[from] ServoError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    Input(String),
}

/// Where the device input of a headless run comes from.
pub enum HeadlessInput {
    /// One waypoint script per device. A two-handed lab given a single script
    /// gets the second hand parked at its rest pose.
    Scripts(Vec<Vec<Waypoint>>),
    /// The recorded samples of a previous session.
    Replay(SessionLog),
    Devices(Vec<Box<dyn Device>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Single(Vec<Waypoint>),
    Multi { devices: Vec<Vec<Waypoint>> },
}

/// Parses a script file: either a waypoint array for device 0 or
/// `{"devices": [[...], [...]]}`.
pub fn parse_script_file(text: &str) -> Result<Vec<Vec<Waypoint>>, DeviceError> {
    if text.trim_start().starts_with('[') {
        return Ok(vec![parse_script(text)?]);
    }
    let file: ScriptFile =
        serde_json::from_str(text).map_err(|e| DeviceError::Config(format!("script: {e}")))?;
    let scripts = match file {
        ScriptFile::Single(s) => vec![s],
        ScriptFile::Multi { devices } => devices,
    };
    if scripts.is_empty() {
        return Err(DeviceError::Config("script file names no devices".into()));
    }
    for s in &scripts {
        validate_script(s)?;
    }
    Ok(scripts)
}

pub fn build_devices(config: &LabConfig, input: HeadlessInput) -> Result<Vec<Box<dyn Device>>, HeadlessError> {
    let needed = config.scenario.device_count();
    let dt = config.dt();
    match input {
        HeadlessInput::Devices(d) => Ok(d),
        HeadlessInput::Scripts(mut scripts) => {
            if scripts.len() > needed {
                return Err(HeadlessError::Input(format!(
                    "{} scripts given; {} takes {needed}",
                    scripts.len(),
                    config.scenario
                )));
            }
            let mut devices: Vec<Box<dyn Device>> = Vec::with_capacity(needed);
            for (i, script) in scripts.drain(..).enumerate() {
                devices.push(Box::new(ScriptedDevice::new(config.device_descriptor(i as u8), script, dt)?));
            }
            while devices.len() < needed {
                let id = devices.len() as u8;
                let parked = vec![Waypoint::new(0.0, Vec3::ZERO)];
                devices.push(Box::new(ScriptedDevice::new(config.device_descriptor(id), parked, dt)?.holding()));
            }
            Ok(devices)
        }
        HeadlessInput::Replay(log) => {
            if log.header.devices != needed {
                return Err(HeadlessError::Input(format!(
                    "log has {} devices; {} takes {needed}",
                    log.header.devices, config.scenario
                )));
            }
            Ok(log
                .replay_devices(config)
                .into_iter()
                .map(|d| Box::new(d) as Box<dyn Device>)
                .collect())
        }
    }
}

#[derive(Debug)]
pub struct HeadlessReport {
    pub ticks: u64,
    pub final_t: f64,
    pub final_hash: u64,
    pub stop: StopReason,
    /// Largest commanded force magnitude seen, N.
    pub max_force_n: f64,
    pub mean_tick_s: f64,
    pub max_tick_s: f64,
    /// Records written when recording.
    pub recorded: Option<u64>,
}

impl HeadlessReport {
    /// True when the run ended for a reason other than a fault.
    pub fn clean(&self) -> bool {
        !matches!(self.stop, StopReason::Fault(_))
    }
}

struct Watch {
    recorder: Option<Recorder>,
    max_force_n: f64,
}

impl TickHook for Watch {
    fn after_tick(&mut self, servo: &Servo, result: &TickResult, report: &TickReport) -> LoopControl {
        for c in &result.commands {
            self.max_force_n = self.max_force_n.max(c.force.norm());
        }
        match &mut self.recorder {
            Some(r) => r.after_tick(servo, result, report),
            None => LoopControl::Continue,
        }
    }
}

/// Runs `ticks` ticks on the virtual clock, or until the input runs out.
pub fn run_headless(
    config: LabConfig,
    input: HeadlessInput,
    ticks: u64,
    record: Option<PathBuf>,
) -> Result<HeadlessReport, HeadlessError> {
    let devices = build_devices(&config, input)?;
    let recorder = match &record {
        Some(path) => Some(Recorder::create(path, &config, 0)?),
        None => None,
    };
    let mut servo = Servo::new(config, devices)?;
    let mut watch = Watch {
        recorder,
        max_force_n: 0.0,
    };
    let summary = run_loop(&mut servo, Policy::Simulated, Some(ticks), &mut watch);
    let recorded = match watch.recorder.take() {
        Some(r) => Some(r.finish()?),
        None => None,
    };
    Ok(HeadlessReport {
        ticks: summary.ticks,
        final_t: summary.final_t,
        final_hash: servo.core().state_hash(),
        stop: summary.stop,
        max_force_n: watch.max_force_n,
        mean_tick_s: summary.mean_compute_s,
        max_tick_s: summary.max_compute_s,
        recorded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioId;
    use crate::session::verify_replay;

    fn sweep(duration: f64) -> Vec<Waypoint> {
        (0..=20)
            .map(|i| {
                let t = duration * f64::from(i) / 20.0;
                Waypoint::new(t, Vec3::new(0.03 * (t * 3.0).sin(), 0.01 * (t * 2.0).cos() - 0.01, 0.0))
            })
            .collect()
    }

    #[test]
    fn parses_both_script_shapes() {
        let one = parse_script_file(r#"[{"t":0,"pos":[0,0,0]},{"t":1,"pos":[0.01,0,0],"button":false}]"#).unwrap();
        assert_eq!(one.len(), 1);
        assert!(!one[0][1].button);
        let two = parse_script_file(
            r#"{"devices":[[{"t":0,"pos":[0,0,0]}],[{"t":0,"pos":[0,0,0]},{"t":2,"pos":[0,0,0.01]}]]}"#,
        )
        .unwrap();
        assert_eq!(two.len(), 2);
        assert!(parse_script_file(r#"{"devices":[]}"#).is_err());
        assert!(parse_script_file(r#"[{"t":1,"pos":[0,0,0]},{"t":0,"pos":[0,0,0]}]"#).is_err());
    }

    #[test]
    fn script_exhaustion_stops_early_and_cleanly() {
        let report = run_headless(LabConfig::default(), HeadlessInput::Scripts(vec![sweep(0.5)]), 2000, None).unwrap();
        assert!(matches!(report.stop, StopReason::EndOfInput));
        assert_eq!(report.ticks, 501);
        assert!(report.clean());
    }

    #[test]
    fn single_script_parks_second_hand() {
        let config = LabConfig::for_scenario(ScenarioId::Precession);
        let report = run_headless(config, HeadlessInput::Scripts(vec![sweep(1.0)]), 1000, None).unwrap();
        assert!(matches!(report.stop, StopReason::Completed));
        assert_eq!(report.ticks, 1000);
    }

    #[test]
    fn too_many_scripts_rejected() {
        let r = run_headless(LabConfig::default(), HeadlessInput::Scripts(vec![sweep(1.0), sweep(1.0)]), 10, None);
        assert!(matches!(r, Err(HeadlessError::Input(_))));
    }

    #[test]
    fn recorded_run_replays_to_same_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.lablog");
        let config = LabConfig::for_scenario(ScenarioId::Coriolis);
        let first = run_headless(config.clone(), HeadlessInput::Scripts(vec![sweep(2.0)]), 2000, Some(path.clone())).unwrap();
        assert_eq!(first.recorded, Some(2000));
        let log = SessionLog::open(&path).unwrap();
        assert!(verify_replay(&log).unwrap().matched);
        let again = run_headless(config, HeadlessInput::Replay(log), 2000, None).unwrap();
        assert_eq!(again.final_hash, first.final_hash);
        assert!(first.max_force_n <= 8.0);
    }
}
