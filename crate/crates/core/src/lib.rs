//! Deterministic haptic virtual-lab engine: friction on an incline, Coriolis
//! deflection on a spinning platform, and gyroscopic precession.

pub mod assessment;
pub mod config;
pub mod coriolis;
pub mod device;
pub mod friction;
pub mod headless;
pub mod labs;
pub mod math;
pub mod precession;
pub mod protocol;
pub mod servo;
pub mod session;

pub use config::{parse_config, ConfigErrors, LabConfig, ScenarioId};
pub use device::{Device, DeviceDescriptor, DeviceError, DeviceSample, ForceCommand};
pub use math::{MathError, StepConfig, Vec3};
pub use servo::{
    run_loop, ControlEvent, CouplingParams, Policy, RunSummary, Scenario, Servo, ServoCore,
    ServoError, Snapshot, StopReason, TickResult,
};
pub use headless::{run_headless, HeadlessInput, HeadlessReport};
pub use protocol::{ClientMessage, ServerMessage, SnapshotMessage};
pub use session::{verify_replay, SessionHeader, SessionLog, TickRecord, VerifyReport};
