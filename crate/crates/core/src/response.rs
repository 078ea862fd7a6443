//! Model output → validated [`ChangeSet`].
//!
//! Processing runs in three steps: [`extract_payload`] locates the first
//! balanced JSON object in free text, [`parse_proposal`] normalizes the
//! accepted document shapes into an [`Overlay`], and [`validate_and_diff`]
//! checks every overlay entry against the schema registry and the current
//! state, keeping only real, schema-valid changes.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::context::{DevicePath, HomeContext, PropertyValue};
use crate::schema::{SchemaRegistry, Violation, ViolationKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResponseError {
    #[error("no JSON object found in the response")]
    NoPayload,
    #[error("payload syntax error: {0}")]
    Syntax(String),
    #[error("payload structure error: {0}")]
    Structure(String),
    #[error("contexts do not share the same device structure: {0}")]
    StructureMismatch(String),
}

impl ResponseError {
    /// Stable short name used in trial records and event payloads.
    pub fn class(&self) -> &'static str {
        match self {
            ResponseError::NoPayload => "no_payload",
            ResponseError::Syntax(_) => "syntax_error",
            ResponseError::Structure(_) => "structure_error",
            ResponseError::StructureMismatch(_) => "structure_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPayload {
    pub text: String,
    /// Byte offsets into the completion text; `end` is exclusive.
    pub start_offset: usize,
    pub end_offset: usize,
}

/// Finds the first balanced `{ ... }` scanning left to right. Braces inside
/// string literals (with escapes) are ignored. If an opening brace never
/// closes, scanning resumes after it.
pub fn extract_payload(completion_text: &str) -> Result<RawPayload, ResponseError> {
    let bytes = completion_text.as_bytes();
    let mut from = 0;
    while let Some(rel) = completion_text[from..].find('{') {
        let start = from + rel;
        if let Some(end) = balanced_end(&bytes[start..]) {
            return Ok(RawPayload {
                text: completion_text[start..start + end].to_owned(),
                start_offset: start,
                end_offset: start + end,
            });
        }
        from = start + 1;
    }
    Err(ResponseError::NoPayload)
}

fn balanced_end(bytes: &[u8]) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalShape {
    /// `{"user": ..., "devices": ...}`
    FullContext,
    /// `{"devices": ...}`
    DevicesDocument,
    /// bare room → type → device → property tree
    DevicesSubtree,
}

/// room → type → device → property → proposed raw value
pub type DeviceTree = IndexMap<String, IndexMap<String, IndexMap<String, IndexMap<String, Value>>>>;

/// A partial device context proposed by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub shape: ProposalShape,
    pub user: Option<Map<String, Value>>,
    pub devices: DeviceTree,
    /// Extra top-level keys next to "devices" (explanations and the like).
    pub ignored_keys: Vec<String>,
}

impl Overlay {
    pub fn entry_count(&self) -> usize {
        self.devices
            .values()
            .flat_map(IndexMap::values)
            .flat_map(IndexMap::values)
            .map(IndexMap::len)
            .sum()
    }

    pub fn device_count(&self) -> usize {
        self.devices
            .values()
            .flat_map(IndexMap::values)
            .map(IndexMap::len)
            .sum()
    }

    /// Overlay echoing every property of `c`.
    pub fn from_context(c: &HomeContext) -> Self {
        let mut devices = DeviceTree::new();
        for (path, d) in c.devices() {
            devices
                .entry(path.room.clone())
                .or_default()
                .entry(path.device_type.clone())
                .or_default()
                .insert(
                    path.device.clone(),
                    d.properties.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
                );
        }
        Self {
            shape: ProposalShape::DevicesDocument,
            user: None,
            devices,
            ignored_keys: Vec::new(),
        }
    }
}

pub fn parse_proposal(raw: &RawPayload) -> Result<Overlay, ResponseError> {
    let doc: Value = serde_json::from_str(&raw.text).map_err(|e| ResponseError::Syntax(e.to_string()))?;
    overlay_from_json(&doc)
}

pub fn overlay_from_json(doc: &Value) -> Result<Overlay, ResponseError> {
    let top = doc
        .as_object()
        .ok_or_else(|| ResponseError::Structure("payload is not an object".into()))?;
    if let Some(devices) = top.get("devices") {
        let user = match top.get("user") {
            None => None,
            Some(Value::Object(u)) => Some(u.clone()),
            Some(other) => return Err(ResponseError::Structure(format!("\"user\" is not an object: {other}"))),
        };
        let shape = if user.is_some() {
            ProposalShape::FullContext
        } else {
            ProposalShape::DevicesDocument
        };
        let ignored_keys = top
            .keys()
            .filter(|k| *k != "devices" && *k != "user")
            .cloned()
            .collect();
        return Ok(Overlay {
            shape,
            user,
            devices: device_tree(devices)?,
            ignored_keys,
        });
    }
    Ok(Overlay {
        shape: ProposalShape::DevicesSubtree,
        user: None,
        devices: device_tree(doc)?,
        ignored_keys: Vec::new(),
    })
}

fn device_tree(value: &Value) -> Result<DeviceTree, ResponseError> {
    fn obj<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>, ResponseError> {
        v.as_object()
            .ok_or_else(|| ResponseError::Structure(format!("expected an object at {at}, found {v}")))
    }
    let mut tree = DeviceTree::new();
    for (room, types) in obj(value, "devices")? {
        let room_entry = tree.entry(room.clone()).or_default();
        for (ty, devices) in obj(types, room)? {
            let type_entry = room_entry.entry(ty.clone()).or_default();
            for (dev, props) in obj(devices, &format!("{room}.{ty}"))? {
                let at = format!("{room}.{ty}.{dev}");
                let mut out = IndexMap::new();
                for (prop, v) in obj(props, &at)? {
                    if v.is_object() || v.is_array() {
                        return Err(ResponseError::Structure(format!(
                            "property {at}.{prop} nests deeper than a scalar"
                        )));
                    }
                    out.insert(prop.clone(), v.clone());
                }
                type_entry.insert(dev.clone(), out);
            }
        }
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Change {
    pub room: String,
    pub device_type: String,
    pub device: String,
    pub property: String,
    pub old: PropertyValue,
    pub new: PropertyValue,
}

impl Change {
    pub fn device_path(&self) -> DevicePath {
        DevicePath::new(&self.room, &self.device_type, &self.device)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub changes: Vec<Change>,
    pub dropped: Vec<Violation>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationPolicy {
    /// Keep valid changes, report the rest.
    #[default]
    DropInvalidFields,
    /// Any violation empties the change list.
    RejectAllOnViolation,
}

/// Diffs an overlay against `current`, validating each entry.
pub fn validate_and_diff(
    current: &HomeContext,
    overlay: &Overlay,
    reg: &SchemaRegistry,
    pol: ValidationPolicy,
) -> ChangeSet {
    let mut changes = Vec::new();
    let mut dropped = Vec::new();
    let mut violation = |path: String, kind, detail: String| dropped.push(Violation { path, kind, detail });

    if let Some(user) = &overlay.user {
        let current_user = current.user().to_json();
        let current_user = current_user.as_object().expect("user serializes to an object");
        for (k, v) in user {
            if current_user.get(k) != Some(v) {
                violation(
                    format!("user.{k}"),
                    ViolationKind::ImmutableViolation,
                    format!("user context is read-only (proposed {v})"),
                );
            }
        }
        for k in current_user.keys().filter(|k| !user.contains_key(*k)) {
            violation(
                format!("user.{k}"),
                ViolationKind::ImmutableViolation,
                "user context is read-only (field removed)".into(),
            );
        }
    }

    for (room_name, types) in &overlay.devices {
        let Some(room) = current.room(room_name) else {
            violation(
                room_name.clone(),
                ViolationKind::UnknownDevice,
                format!("no room {room_name:?}"),
            );
            continue;
        };
        for (ty, devices) in types {
            let at = format!("{room_name}.{ty}");
            let (Some(schema), Some(current_devices)) = (reg.get(ty), room.devices.get(ty)) else {
                violation(
                    at,
                    ViolationKind::UnknownDeviceType,
                    format!("no {ty:?} in {room_name:?}"),
                );
                continue;
            };
            for (dev, props) in devices {
                let at = format!("{room_name}.{ty}.{dev}");
                let Some(device) = current_devices.get(dev) else {
                    violation(at, ViolationKind::UnknownDevice, format!("no device {dev:?}"));
                    continue;
                };
                for (prop, raw) in props {
                    let at = format!("{at}.{prop}");
                    let (Some(ps), Some(old)) = (schema.property(prop), device.properties.get(prop)) else {
                        violation(
                            at,
                            ViolationKind::InventedField,
                            format!("{ty:?} has no property {prop:?} (proposed {raw})"),
                        );
                        continue;
                    };
                    let new = match ps.coerce(raw) {
                        Ok(v) => v,
                        Err((kind, detail)) => {
                            violation(at, kind, detail);
                            continue;
                        }
                    };
                    if &new == old {
                        continue;
                    }
                    if !ps.mutable {
                        violation(at, ViolationKind::ImmutableViolation, format!("{prop:?} is read-only"));
                        continue;
                    }
                    changes.push(Change {
                        room: room_name.clone(),
                        device_type: ty.clone(),
                        device: dev.clone(),
                        property: prop.clone(),
                        old: old.clone(),
                        new,
                    });
                }
            }
        }
    }

    if pol == ValidationPolicy::RejectAllOnViolation && !dropped.is_empty() {
        changes.clear();
    }
    ChangeSet { changes, dropped }
}

/// Brute-force diff of two full contexts with identical structure: walks
/// every (room, type, device, property) and reports each differing value.
pub fn diff_oracle(current: &HomeContext, proposed_full: &HomeContext) -> Result<ChangeSet, ResponseError> {
    let mismatch = |what: String| Err(ResponseError::StructureMismatch(what));
    let rooms_a: Vec<_> = current.rooms().map(|r| &r.name).collect();
    let rooms_b: Vec<_> = proposed_full.rooms().map(|r| &r.name).collect();
    if rooms_a != rooms_b {
        return mismatch(format!("rooms {rooms_a:?} vs {rooms_b:?}"));
    }
    let mut changes = Vec::new();
    for room in current.rooms() {
        let other = proposed_full.room(&room.name).expect("room sets equal");
        if room.devices.keys().ne(other.devices.keys()) {
            return mismatch(format!("device types in {}", room.name));
        }
        for (ty, devices) in &room.devices {
            let other_devices = &other.devices[ty];
            if devices.keys().ne(other_devices.keys()) {
                return mismatch(format!("devices in {}.{ty}", room.name));
            }
            for (name, device) in devices {
                let other_device = &other_devices[name];
                if device.properties.keys().ne(other_device.properties.keys()) {
                    return mismatch(format!("properties of {}.{ty}.{name}", room.name));
                }
                for (prop, old) in &device.properties {
                    let new = &other_device.properties[prop];
                    if old != new {
                        changes.push(Change {
                            room: room.name.clone(),
                            device_type: ty.clone(),
                            device: name.clone(),
                            property: prop.clone(),
                            old: old.clone(),
                            new: new.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(ChangeSet {
        changes,
        dropped: Vec::new(),
    })
}

/// Full pipeline over a completion text.
pub fn process_completion(
    text: &str,
    current: &HomeContext,
    reg: &SchemaRegistry,
    pol: ValidationPolicy,
) -> Result<(ProposalShape, ChangeSet), ResponseError> {
    let raw = extract_payload(text)?;
    let overlay = parse_proposal(&raw)?;
    Ok((overlay.shape, validate_and_diff(current, &overlay, reg, pol)))
}
