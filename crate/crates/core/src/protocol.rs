//! JSON messages exchanged with the browser over `/ws`.
//!
//! Every frame is one JSON object with a `type` tag and a `v` schema version.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{is_known_key, is_live_key, ScenarioId};
use crate::friction::format_hud_value;
use crate::math::Vec3;
use crate::servo::Snapshot;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Normalized pointer in `[-1, 1]^3` acting as device `device`.
    Pointer {
        pos: Vec3,
        #[serde(default)]
        device: u8,
    },
    Param { name: String, value: Value },
    Scenario {
        name: String,
        #[serde(default)]
        variant: Option<String>,
    },
    Reset {},
}

/// A frame that cannot be understood at all. The client is disconnected.
#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u64),
}

/// Parses one text frame. A missing `v` is read as the current version.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, ProtocolError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ProtocolError::Malformed("expected a JSON object".into()))?;
    match obj.remove("v") {
        None => {}
        Some(v) => match v.as_u64() {
            Some(PROTOCOL_VERSION) => {}
            Some(other) => return Err(ProtocolError::Version(other)),
            None => return Err(ProtocolError::Malformed(format!("bad version field {v}"))),
        },
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Pointer { .. } => "pointer",
            ClientMessage::Param { .. } => "param",
            ClientMessage::Scenario { .. } => "scenario",
            ClientMessage::Reset {} => "reset",
        }
    }

    /// Checks what can be checked without the servo. `devices` is the active
    /// scenario's device count.
    pub fn validate(&self, devices: usize) -> Result<(), String> {
        match self {
            ClientMessage::Pointer { pos, device } => {
                if usize::from(*device) >= devices {
                    return Err(format!("device {device} out of range; scenario has {devices}"));
                }
                if !pos.is_finite() {
                    return Err("pointer position must be finite".into());
                }
                Ok(())
            }
            ClientMessage::Param { name, .. } => {
                if is_live_key(name) {
                    Ok(())
                } else if is_known_key(name) {
                    Err(format!("{name} is not live-tunable"))
                } else {
                    Err(format!("unknown parameter {name}"))
                }
            }
            ClientMessage::Scenario { name, variant } => {
                name.parse::<ScenarioId>()?;
                if let Some(v) = variant {
                    crate::config::parse_variant(v)?;
                }
                Ok(())
            }
            ClientMessage::Reset {} => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        with_version(serde_json::to_value(self).expect("client message serializes"))
    }
}

fn with_version(mut value: Value) -> String {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("v".into(), Value::from(PROTOCOL_VERSION));
    }
    value.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyMessage {
    pub name: String,
    pub pos: Vec3,
    pub axis: Vec3,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowMessage {
    pub origin: Vec3,
    pub vec: Vec3,
    pub label: String,
    pub magnitude_n: f64,
}

/// Wire form of a servo snapshot. `hud` carries the exact values and
/// `hud_text` the same values formatted for display.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMessage {
    pub t: f64,
    pub scenario: ScenarioId,
    pub bodies: Vec<BodyMessage>,
    pub arrows: Vec<ArrowMessage>,
    pub arrow_scale: f64,
    pub hud: BTreeMap<String, f64>,
    pub hud_text: BTreeMap<String, String>,
    pub score: Option<u32>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub error: Option<String>,
}

impl From<&Snapshot> for SnapshotMessage {
    fn from(s: &Snapshot) -> Self {
        Self {
            t: s.t,
            scenario: s.scenario,
            bodies: s
                .bodies
                .iter()
                .map(|b| BodyMessage {
                    name: b.name.to_string(),
                    pos: b.pos,
                    axis: b.axis,
                    angle: b.angle,
                })
                .collect(),
            arrows: s
                .arrows
                .iter()
                .map(|a| ArrowMessage {
                    origin: a.origin,
                    vec: a.vec,
                    label: a.label.to_string(),
                    magnitude_n: a.magnitude_n,
                })
                .collect(),
            arrow_scale: s.arrow_scale,
            hud: s.hud.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            hud_text: s
                .hud
                .iter()
                .map(|(k, v)| (k.to_string(), format_hud_value(*v)))
                .collect(),
            score: s.score,
            flags: s.flags.iter().map(|f| f.to_string()).collect(),
            error: s.error.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(SnapshotMessage),
    /// A well-formed message that could not be applied.
    Rejected { request: String, reason: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        with_version(serde_json::to_value(self).expect("server message serializes"))
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("v");
        }
        serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}
