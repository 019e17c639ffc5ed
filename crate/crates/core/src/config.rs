//! Lab configuration addressed by dotted key paths (`friction.mu_s`, `port`, ...).
//!
//! Files are TOML; tables and dotted keys both flatten to the same key paths.
//! Validation reports every violation at once, each tagged with its key.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coriolis::{CoriolisScene, Goal, PuckKind};
use crate::device::{DeviceDescriptor, DEFAULT_HALF_EXTENT_M};
use crate::friction::{FrictionScene, DEFAULT_G};
use crate::math::{StepConfig, DEFAULT_MAX_FORCE_N, DEFAULT_V_EPS, MAX_DT};
use crate::precession::GyroConfig;
use crate::servo::CouplingParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Friction,
    Coriolis,
    Precession,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::Friction, ScenarioId::Coriolis, ScenarioId::Precession];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Friction => "friction",
            ScenarioId::Coriolis => "coriolis",
            ScenarioId::Precession => "precession",
        }
    }

    /// Number of haptic devices the lab expects.
    pub fn device_count(self) -> usize {
        match self {
            ScenarioId::Precession => 2,
            _ => 1,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ScenarioId::Friction => 1,
            ScenarioId::Coriolis => 2,
            ScenarioId::Precession => 3,
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "friction" => Ok(ScenarioId::Friction),
            "coriolis" => Ok(ScenarioId::Coriolis),
            "precession" => Ok(ScenarioId::Precession),
            other => Err(format!(
                "unknown scenario '{other}' (expected friction, coriolis or precession)"
            )),
        }
    }
}

pub fn parse_variant(s: &str) -> Result<PuckKind, String> {
    match s {
        "ball" => Ok(PuckKind::Ball),
        "glider" => Ok(PuckKind::Glider),
        other => Err(format!("unknown variant '{other}' (expected ball or glider)")),
    }
}

fn variant_str(kind: PuckKind) -> &'static str {
    match kind {
        PuckKind::Ball => "ball",
        PuckKind::Glider => "glider",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// All problems found in one configuration pass.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ConfigErrors(pub Vec<Violation>);

impl ConfigErrors {
    fn push(&mut self, key: &str, message: impl Into<String>) {
        self.0.push(Violation {
            key: key.to_string(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.0
    }

    fn into_result(self) -> Result<(), ConfigErrors> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Debug, PartialEq)]
pub struct FrictionSettings {
    pub theta_deg: f64,
    pub mu_s: f64,
    pub mu_k: f64,
    pub mass_kg: f64,
    /// Full track length; the block may travel half of it either side of centre.
    pub track_len_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoriolisSettings {
    pub omega: f64,
    pub platform_radius_m: f64,
    pub goal_angle_deg: f64,
    pub goal_radius_m: f64,
    pub variant: PuckKind,
    pub drag: f64,
    pub centrifugal: bool,
    pub puck_mass_kg: f64,
    pub haptic_gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecessionSettings {
    pub wheel_mass_kg: f64,
    pub wheel_radius_m: f64,
    pub handle_half_len_m: f64,
    pub spin_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabConfig {
    pub scenario: ScenarioId,
    pub friction: FrictionSettings,
    pub coriolis: CoriolisSettings,
    pub precession: PrecessionSettings,
    pub coupling: CouplingParams,
    pub clamp_max_force_n: f64,
    pub device_half_extent_m: f64,
    pub servo_rate_hz: u32,
    pub snapshot_rate_hz: u32,
    /// Scene metres per newton for force arrows.
    pub arrow_scale: f64,
    pub port: u16,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioId::Friction,
            friction: FrictionSettings {
                theta_deg: 30.0,
                mu_s: 0.5,
                mu_k: 0.3,
                mass_kg: 1.0,
                track_len_m: 1.0,
            },
            coriolis: CoriolisSettings {
                omega: 1.0,
                platform_radius_m: 1.0,
                goal_angle_deg: 90.0,
                goal_radius_m: 0.1,
                variant: PuckKind::Ball,
                drag: 0.2,
                centrifugal: false,
                puck_mass_kg: 0.5,
                haptic_gain: 1.0,
            },
            precession: PrecessionSettings {
                wheel_mass_kg: 1.0,
                wheel_radius_m: 0.2,
                handle_half_len_m: 0.15,
                spin_rate: 100.0,
            },
            coupling: CouplingParams::default(),
            clamp_max_force_n: DEFAULT_MAX_FORCE_N,
            device_half_extent_m: DEFAULT_HALF_EXTENT_M,
            servo_rate_hz: 1000,
            snapshot_rate_hz: 60,
            arrow_scale: 0.02,
            port: 8080,
        }
    }
}

/// Every recognised key with whether it may change while the servo runs.
pub const KEYS: &[(&str, bool)] = &[
    ("scenario", false),
    ("friction.theta_deg", true),
    ("friction.mu_s", true),
    ("friction.mu_k", true),
    ("friction.mass_kg", true),
    ("friction.track_len_m", false),
    ("coriolis.omega", true),
    ("coriolis.platform_radius_m", false),
    ("coriolis.goal_angle_deg", true),
    ("coriolis.goal_radius_m", true),
    ("coriolis.variant", false),
    ("coriolis.drag", true),
    ("coriolis.centrifugal", true),
    ("coriolis.puck_mass_kg", true),
    ("coriolis.haptic_gain", true),
    ("precession.wheel_mass_kg", true),
    ("precession.wheel_radius_m", true),
    ("precession.handle_half_len_m", true),
    ("precession.spin_rate", true),
    ("coupling.k", true),
    ("coupling.b", true),
    ("clamp.max_force_n", false),
    ("device.half_extent_m", false),
    ("servo.rate_hz", false),
    ("snapshot.rate_hz", false),
    ("snapshot.arrow_scale", true),
    ("port", false),
];

pub fn is_known_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

pub fn is_live_key(key: &str) -> bool {
    KEYS.iter().any(|(k, live)| *k == key && *live)
}

fn as_f64(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("expected a number, got {v}"))
}

fn as_bool(v: &Value) -> Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("expected true or false, got {v}"))
}

fn as_str(v: &Value) -> Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected a string, got {v}"))
}

fn as_u32(v: &Value) -> Result<u32, String> {
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| format!("expected a positive integer, got {v}"))
}

impl LabConfig {
    /// Defaults for the given lab.
    pub fn for_scenario(scenario: ScenarioId) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    /// Sets one key. Unknown keys and type mismatches are errors; range checks
    /// happen in [`LabConfig::validate`].
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), String> {
        match key {
            "scenario" => self.scenario = as_str(v)?.parse()?,
            "friction.theta_deg" => self.friction.theta_deg = as_f64(v)?,
            "friction.mu_s" => self.friction.mu_s = as_f64(v)?,
            "friction.mu_k" => self.friction.mu_k = as_f64(v)?,
            "friction.mass_kg" => self.friction.mass_kg = as_f64(v)?,
            "friction.track_len_m" => self.friction.track_len_m = as_f64(v)?,
            "coriolis.omega" => self.coriolis.omega = as_f64(v)?,
            "coriolis.platform_radius_m" => self.coriolis.platform_radius_m = as_f64(v)?,
            "coriolis.goal_angle_deg" => self.coriolis.goal_angle_deg = as_f64(v)?,
            "coriolis.goal_radius_m" => self.coriolis.goal_radius_m = as_f64(v)?,
            "coriolis.variant" => self.coriolis.variant = parse_variant(as_str(v)?)?,
            "coriolis.drag" => self.coriolis.drag = as_f64(v)?,
            "coriolis.centrifugal" => self.coriolis.centrifugal = as_bool(v)?,
            "coriolis.puck_mass_kg" => self.coriolis.puck_mass_kg = as_f64(v)?,
            "coriolis.haptic_gain" => self.coriolis.haptic_gain = as_f64(v)?,
            "precession.wheel_mass_kg" => self.precession.wheel_mass_kg = as_f64(v)?,
            "precession.wheel_radius_m" => self.precession.wheel_radius_m = as_f64(v)?,
            "precession.handle_half_len_m" => self.precession.handle_half_len_m = as_f64(v)?,
            "precession.spin_rate" => self.precession.spin_rate = as_f64(v)?,
            "coupling.k" => self.coupling.k = as_f64(v)?,
            "coupling.b" => self.coupling.b = as_f64(v)?,
            "clamp.max_force_n" => self.clamp_max_force_n = as_f64(v)?,
            "device.half_extent_m" => self.device_half_extent_m = as_f64(v)?,
            "servo.rate_hz" => self.servo_rate_hz = as_u32(v)?,
            "snapshot.rate_hz" => self.snapshot_rate_hz = as_u32(v)?,
            "snapshot.arrow_scale" => self.arrow_scale = as_f64(v)?,
            "port" => {
                self.port = v
                    .as_u64()
                    .and_then(|n| u16::try_from(n).ok())
                    .ok_or_else(|| format!("expected a port number, got {v}"))?
            }
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let v = match key {
            "scenario" => Value::from(self.scenario.as_str()),
            "friction.theta_deg" => self.friction.theta_deg.into(),
            "friction.mu_s" => self.friction.mu_s.into(),
            "friction.mu_k" => self.friction.mu_k.into(),
            "friction.mass_kg" => self.friction.mass_kg.into(),
            "friction.track_len_m" => self.friction.track_len_m.into(),
            "coriolis.omega" => self.coriolis.omega.into(),
            "coriolis.platform_radius_m" => self.coriolis.platform_radius_m.into(),
            "coriolis.goal_angle_deg" => self.coriolis.goal_angle_deg.into(),
            "coriolis.goal_radius_m" => self.coriolis.goal_radius_m.into(),
            "coriolis.variant" => variant_str(self.coriolis.variant).into(),
            "coriolis.drag" => self.coriolis.drag.into(),
            "coriolis.centrifugal" => self.coriolis.centrifugal.into(),
            "coriolis.puck_mass_kg" => self.coriolis.puck_mass_kg.into(),
            "coriolis.haptic_gain" => self.coriolis.haptic_gain.into(),
            "precession.wheel_mass_kg" => self.precession.wheel_mass_kg.into(),
            "precession.wheel_radius_m" => self.precession.wheel_radius_m.into(),
            "precession.handle_half_len_m" => self.precession.handle_half_len_m.into(),
            "precession.spin_rate" => self.precession.spin_rate.into(),
            "coupling.k" => self.coupling.k.into(),
            "coupling.b" => self.coupling.b.into(),
            "clamp.max_force_n" => self.clamp_max_force_n.into(),
            "device.half_extent_m" => self.device_half_extent_m.into(),
            "servo.rate_hz" => self.servo_rate_hz.into(),
            "snapshot.rate_hz" => self.snapshot_rate_hz.into(),
            "snapshot.arrow_scale" => self.arrow_scale.into(),
            "port" => self.port.into(),
            _ => return None,
        };
        Some(v)
    }

    /// The full configuration as key path → value. Enough to rebuild it exactly.
    pub fn entries(&self) -> BTreeMap<String, Value> {
        KEYS.iter()
            .filter_map(|(k, _)| self.get(k).map(|v| (k.to_string(), v)))
            .collect()
    }

    /// Rebuilds a configuration from key/value pairs applied over the defaults.
    pub fn from_entries<'a, I>(entries: I) -> Result<LabConfig, ConfigErrors>
    where
        I: IntoIterator<Item = (&'a String, &'a Value)>,
    {
        let mut cfg = LabConfig::default();
        let mut errors = ConfigErrors::default();
        for (k, v) in entries {
            if let Err(e) = cfg.set(k, v) {
                errors.push(k, e);
            }
        }
        if let Err(more) = cfg.validate() {
            errors.0.extend(more.0);
        }
        errors.into_result().map(|_| cfg)
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.servo_rate_hz)
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            dt: self.dt(),
            v_eps: DEFAULT_V_EPS,
        }
    }

    pub fn friction_scene(&self) -> FrictionScene {
        FrictionScene {
            theta: self.friction.theta_deg.to_radians(),
            mu_s: self.friction.mu_s,
            mu_k: self.friction.mu_k,
            mass: self.friction.mass_kg,
            g: DEFAULT_G,
            track_half_length: 0.5 * self.friction.track_len_m,
        }
    }

    pub fn coriolis_scene(&self) -> CoriolisScene {
        let c = &self.coriolis;
        CoriolisScene {
            omega: c.omega,
            platform_radius: c.platform_radius_m,
            goal: Goal::on_rim(c.platform_radius_m, c.goal_angle_deg.to_radians(), c.goal_radius_m),
            puck_mass: c.puck_mass_kg,
            ground_drag: c.drag,
            centrifugal_enabled: c.centrifugal,
            haptic_gain: c.haptic_gain,
        }
    }

    pub fn gyro_config(&self) -> GyroConfig {
        let p = &self.precession;
        GyroConfig {
            wheel_mass: p.wheel_mass_kg,
            wheel_radius: p.wheel_radius_m,
            handle_half_length: p.handle_half_len_m,
            spin_rate: p.spin_rate,
        }
    }

    pub fn device_descriptor(&self, id: u8) -> DeviceDescriptor {
        DeviceDescriptor::new(id)
            .with_half_extent(self.device_half_extent_m)
            .with_max_force(self.clamp_max_force_n)
    }

    /// Lightest body the coupling spring can drive in the active scenario.
    pub fn min_proxy_mass(&self) -> f64 {
        match self.scenario {
            ScenarioId::Friction => self.friction.mass_kg,
            ScenarioId::Coriolis => self.coriolis.puck_mass_kg,
            ScenarioId::Precession => self.precession.wheel_mass_kg,
        }
    }

    /// Checks every invariant and returns all violations found.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut e = ConfigErrors::default();
        let positive = |e: &mut ConfigErrors, key: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                e.push(key, format!("must be > 0, got {v}"));
            }
        };

        let f = &self.friction;
        if !(f.theta_deg >= 0.0 && f.theta_deg < 90.0) {
            e.push("friction.theta_deg", format!("must be in [0, 90), got {}", f.theta_deg));
        }
        if !(f.mu_k >= 0.0 && f.mu_k.is_finite()) {
            e.push("friction.mu_k", format!("must be >= 0, got {}", f.mu_k));
        }
        if !(f.mu_s.is_finite() && f.mu_s >= f.mu_k) {
            e.push(
                "friction.mu_s",
                format!("mu_s >= mu_k required, got mu_s={} mu_k={}", f.mu_s, f.mu_k),
            );
        }
        positive(&mut e, "friction.mass_kg", f.mass_kg);
        positive(&mut e, "friction.track_len_m", f.track_len_m);

        let c = &self.coriolis;
        if !c.omega.is_finite() {
            e.push("coriolis.omega", "must be finite");
        }
        positive(&mut e, "coriolis.platform_radius_m", c.platform_radius_m);
        if !c.goal_angle_deg.is_finite() {
            e.push("coriolis.goal_angle_deg", "must be finite");
        }
        positive(&mut e, "coriolis.goal_radius_m", c.goal_radius_m);
        if !(c.drag >= 0.0 && c.drag.is_finite()) {
            e.push("coriolis.drag", format!("must be >= 0, got {}", c.drag));
        }
        positive(&mut e, "coriolis.puck_mass_kg", c.puck_mass_kg);
        if !c.haptic_gain.is_finite() {
            e.push("coriolis.haptic_gain", "must be finite");
        }

        let p = &self.precession;
        positive(&mut e, "precession.wheel_mass_kg", p.wheel_mass_kg);
        positive(&mut e, "precession.wheel_radius_m", p.wheel_radius_m);
        positive(&mut e, "precession.handle_half_len_m", p.handle_half_len_m);
        if !(0.0..=crate::precession::MAX_SPIN_RATE).contains(&p.spin_rate) {
            e.push(
                "precession.spin_rate",
                format!("must be in [0, {}], got {}", crate::precession::MAX_SPIN_RATE, p.spin_rate),
            );
        }

        positive(&mut e, "coupling.k", self.coupling.k);
        if !(self.coupling.b >= 0.0 && self.coupling.b.is_finite()) {
            e.push("coupling.b", format!("must be >= 0, got {}", self.coupling.b));
        }
        positive(&mut e, "clamp.max_force_n", self.clamp_max_force_n);
        positive(&mut e, "device.half_extent_m", self.device_half_extent_m);
        positive(&mut e, "snapshot.arrow_scale", self.arrow_scale);

        let dt_ok = self.servo_rate_hz > 0 && self.dt() <= MAX_DT;
        if !dt_ok {
            e.push(
                "servo.rate_hz",
                format!("must be at least {} Hz, got {}", (1.0 / MAX_DT) as u32, self.servo_rate_hz),
            );
        }
        if self.snapshot_rate_hz == 0 || self.snapshot_rate_hz > self.servo_rate_hz {
            e.push(
                "snapshot.rate_hz",
                format!(
                    "must be in [1, servo rate {}], got {}",
                    self.servo_rate_hz, self.snapshot_rate_hz
                ),
            );
        }

        if dt_ok && self.coupling.k > 0.0 && self.min_proxy_mass() > 0.0 {
            if let Err(msg) = self.coupling.stability_check(self.dt(), self.min_proxy_mass()) {
                e.push("coupling.k", msg);
            }
        }
        e.into_result()
    }
}

/// Flattens a TOML document into key path → value pairs.
pub fn flatten_toml(text: &str) -> Result<Vec<(String, Value)>, ConfigErrors> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![Violation {
            key: "<file>".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut out = Vec::new();
    flatten_into(&mut out, "", &toml::Value::Table(table));
    Ok(out)
}

fn flatten_into(out: &mut Vec<(String, Value)>, prefix: &str, v: &toml::Value) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(out, &key, child);
            }
        }
        other => {
            let json = serde_json::to_value(other).unwrap_or(Value::Null);
            out.push((prefix.to_string(), json));
        }
    }
}

/// Reads a CLI override value: JSON when it parses, a bare string otherwise.
pub fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Builds a validated configuration from an optional TOML file and CLI
/// overrides, the latter taking precedence. Reports every violation.
pub fn parse_config(file: Option<&str>, overrides: &[(String, Value)]) -> Result<LabConfig, ConfigErrors> {
    let mut entries: Vec<(String, Value)> = match file {
        Some(text) => flatten_toml(text)?,
        None => Vec::new(),
    };
    entries.extend(overrides.iter().cloned());
    LabConfig::from_entries(entries.iter().map(|(k, v)| (k, v)))
}
