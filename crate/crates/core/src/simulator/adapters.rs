//! Adapter bindings and the wire dialects spoken to devices.

use std::collections::HashSet;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::SimulatorError;
use crate::context::{DevicePath, HomeContext, PropertyValue, Switch};
use crate::response::Change;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    HueGroup,
    SmartPlug,
    InMemory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterBinding {
    pub path: DevicePath,
    pub kind: AdapterKind,
    /// Base URL for network adapters, free-form label for in-memory ones.
    pub address: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<u32>,
}

impl AdapterBinding {
    pub fn in_memory(path: DevicePath) -> Self {
        Self {
            path,
            kind: AdapterKind::InMemory,
            address: "memory".into(),
            group_id: None,
        }
    }

    pub fn hue_group(path: DevicePath, address: impl Into<String>, group_id: u32) -> Self {
        Self {
            path,
            kind: AdapterKind::HueGroup,
            address: address.into(),
            group_id: Some(group_id),
        }
    }

    pub fn smart_plug(path: DevicePath, address: impl Into<String>) -> Self {
        Self {
            path,
            kind: AdapterKind::SmartPlug,
            address: address.into(),
            group_id: None,
        }
    }

    /// Identity of the physical endpoint; several devices may share one
    /// Hue group.
    pub(crate) fn target(&self) -> AdapterTarget {
        AdapterTarget {
            kind: self.kind,
            address: self.address.clone(),
            id: match self.kind {
                AdapterKind::HueGroup => self.group_id.unwrap_or_default().to_string(),
                AdapterKind::SmartPlug | AdapterKind::InMemory => self.path.device.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct AdapterTarget {
    pub kind: AdapterKind,
    pub address: String,
    pub id: String,
}

/// Device path → binding, one per device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    list: Vec<AdapterBinding>,
}

impl Bindings {
    pub fn new(list: Vec<AdapterBinding>) -> Result<Self, SimulatorError> {
        let mut seen = HashSet::new();
        for b in &list {
            if !seen.insert(&b.path) {
                return Err(SimulatorError::DuplicateBinding(b.path.clone()));
            }
            if b.kind == AdapterKind::HueGroup && b.group_id.is_none() {
                return Err(SimulatorError::InvalidBinding(format!(
                    "{} is a hue_group without group_id",
                    b.path
                )));
            }
        }
        Ok(Self { list })
    }

    /// Every device of `c` bound to the in-memory adapter.
    pub fn in_memory(c: &HomeContext) -> Self {
        Self {
            list: c.devices().map(|(p, _)| AdapterBinding::in_memory(p)).collect(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, SimulatorError> {
        let list: Vec<AdapterBinding> =
            serde_json::from_str(text).map_err(|e| SimulatorError::InvalidBinding(e.to_string()))?;
        Self::new(list)
    }

    pub fn get(&self, path: &DevicePath) -> Option<&AdapterBinding> {
        self.list.iter().find(|b| &b.path == path)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AdapterBinding> {
        self.list.iter()
    }

    /// Replaces or adds the binding for its path.
    pub fn with(mut self, binding: AdapterBinding) -> Self {
        self.list.retain(|b| b.path != binding.path);
        self.list.push(binding);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Put,
    Post,
    Get,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Put => "PUT",
            Method::Post => "POST",
            Method::Get => "GET",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireCommand {
    pub method: Method,
    pub path: String,
    pub body: String,
}

/// Writes `{"a": 1, "b": [1, 2]}`: one space after `:` and `,`, no newlines.
struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }
}

pub(crate) fn to_spaced(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    v.serialize(&mut ser).expect("in-memory write");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

fn switch_of(change: &Change) -> Result<bool, SimulatorError> {
    match change.new {
        PropertyValue::Switch(s) => Ok(s == Switch::On),
        _ => Err(unsupported(change, "state must be on/off")),
    }
}

fn unsupported(change: &Change, why: &str) -> SimulatorError {
    SimulatorError::UnsupportedProperty {
        path: format!("{}.{}", change.device_path(), change.property),
        reason: why.to_owned(),
    }
}

/// Group-action payload: state → `on`, brightness → `bri` (0..=254),
/// effect → `effect`, emitted in that key order.
pub fn hue_group_payload<'a>(
    group_id: u32,
    changes: impl IntoIterator<Item = &'a Change>,
) -> Result<WireCommand, SimulatorError> {
    let mut on = None;
    let mut bri = None;
    let mut effect = None;
    for change in changes {
        let (slot, value) = match change.property.as_str() {
            "state" => (&mut on, Value::Bool(switch_of(change)?)),
            "brightness" => match change.new {
                PropertyValue::Integer(b @ 0..=254) => (&mut bri, Value::from(b)),
                _ => return Err(unsupported(change, "bri must be an integer in 0..=254")),
            },
            "effect" => match change.new.as_text() {
                Some(e) => (&mut effect, Value::from(e)),
                None => return Err(unsupported(change, "effect must be text")),
            },
            _ => return Err(unsupported(change, "no hue group-action mapping")),
        };
        match slot {
            Some(prev) if *prev != value => {
                return Err(SimulatorError::ConflictingGroupChange {
                    group_id,
                    detail: format!("{} wants {value}, another device wants {prev}", change.device_path()),
                })
            }
            _ => *slot = Some(value),
        }
    }
    let mut body = Map::new();
    for (key, v) in [("on", on), ("bri", bri), ("effect", effect)] {
        if let Some(v) = v {
            body.insert(key.into(), v);
        }
    }
    Ok(WireCommand {
        method: Method::Put,
        path: format!("/groups/{group_id}/action"),
        body: to_spaced(&Value::Object(body)),
    })
}

/// Smart-plug payload: `PUT /plug/{id}` with `{"state": "on"|"off"}`.
pub fn smart_plug_payload<'a>(
    plug_id: &str,
    changes: impl IntoIterator<Item = &'a Change>,
) -> Result<WireCommand, SimulatorError> {
    let mut state = None;
    for change in changes {
        if change.property != "state" {
            return Err(unsupported(change, "plugs only switch on and off"));
        }
        switch_of(change)?;
        state = Some(change.new.to_json());
    }
    let mut body = Map::new();
    if let Some(s) = state {
        body.insert("state".into(), s);
    }
    Ok(WireCommand {
        method: Method::Put,
        path: format!("/plug/{plug_id}"),
        body: to_spaced(&Value::Object(body)),
    })
}

/// Translates a group-action state document into context properties.
pub(crate) fn hue_to_properties(action: &Map<String, Value>) -> Vec<(String, PropertyValue)> {
    let mut out = Vec::new();
    if let Some(on) = action.get("on").and_then(Value::as_bool) {
        out.push((
            "state".into(),
            if on { PropertyValue::on() } else { PropertyValue::off() },
        ));
    }
    if let Some(bri) = action.get("bri").and_then(Value::as_i64) {
        out.push(("brightness".into(), PropertyValue::Integer(bri)));
    }
    if let Some(effect) = action.get("effect").and_then(Value::as_str) {
        out.push(("effect".into(), PropertyValue::text(effect)));
    }
    out
}
