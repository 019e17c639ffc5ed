//! Fixtures shared by the benchmarks.

use haptilab::device::{Device, ScriptedDevice, Waypoint};
use haptilab::{LabConfig, ScenarioId, Servo, Vec3};

/// A hand sweeping back and forth through the workspace, held down throughout.
pub fn sweep_script(seconds: f64) -> Vec<Waypoint> {
    let n = (seconds * 10.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 * 0.1;
            Waypoint::new(t, Vec3::new(0.04 * (1.3 * t).sin(), 0.02 * (0.7 * t).cos(), 0.01 * (2.1 * t).sin()))
        })
        .collect()
}

/// A servo for `scenario` driven by never-ending scripted hands.
pub fn scripted_servo(scenario: ScenarioId) -> Servo {
    let config = LabConfig::for_scenario(scenario);
    let devices = (0..scenario.device_count())
        .map(|i| {
            let dev = ScriptedDevice::new(config.device_descriptor(i as u8), sweep_script(60.0), config.dt())
                .expect("valid script")
                .holding();
            Box::new(dev) as Box<dyn Device>
        })
        .collect();
    Servo::new(config, devices).expect("valid servo")
}
