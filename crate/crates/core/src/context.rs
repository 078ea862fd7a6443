//! Structured home context: the immutable user facts plus the device tree
//! (room → device type → device → property), and its canonical JSON form.

use std::fmt;

use indexmap::IndexMap;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("structure error: {0}")]
    Structure(String),
}

/// Switch position of a device. Always serialized lowercase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn as_str(self) -> &'static str {
        match self {
            Switch::On => "on",
            Switch::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "on" => Some(Switch::On),
            "off" => Some(Switch::Off),
            _ => None,
        }
    }
}

/// A single device property value.
///
/// The `Text` variant never holds exactly `"on"` or `"off"`; those strings
/// always become [`PropertyValue::Switch`]. Use [`PropertyValue::text`] to
/// construct text values so the normalization is applied.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PropertyValue {
    Switch(Switch),
    Integer(i64),
    Text(String),
}

impl PropertyValue {
    pub fn text(s: impl Into<String>) -> Self {
        let s = s.into();
        match Switch::parse(&s) {
            Some(sw) => PropertyValue::Switch(sw),
            None => PropertyValue::Text(s),
        }
    }

    pub const fn on() -> Self {
        PropertyValue::Switch(Switch::On)
    }

    pub const fn off() -> Self {
        PropertyValue::Switch(Switch::Off)
    }

    /// Converts a scalar JSON value. Objects, arrays, null, booleans and
    /// non-integral numbers have no property representation.
    pub fn from_json(value: &Value) -> Option<Self> {
        match value {
            Value::String(s) => Some(Self::text(s.as_str())),
            Value::Number(n) => n.as_i64().map(PropertyValue::Integer),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            PropertyValue::Switch(s) => Value::String(s.as_str().to_owned()),
            PropertyValue::Integer(i) => Value::from(*i),
            PropertyValue::Text(t) => Value::String(t.clone()),
        }
    }

    /// String form for text-kind comparisons (switch values read as their name).
    pub fn as_text(&self) -> Option<&str> {
        match self {
            PropertyValue::Switch(s) => Some(s.as_str()),
            PropertyValue::Text(t) => Some(t),
            PropertyValue::Integer(_) => None,
        }
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyValue::Switch(s) => f.write_str(s.as_str()),
            PropertyValue::Integer(i) => write!(f, "{i}"),
            PropertyValue::Text(t) => write!(f, "{t:?}"),
        }
    }
}

impl serde::Serialize for PropertyValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for PropertyValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        PropertyValue::from_json(&v).ok_or_else(|| serde::de::Error::custom(format!("not a property value: {v}")))
    }
}

/// Address of one device in the home.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct DevicePath {
    pub room: String,
    pub device_type: String,
    pub device: String,
}

impl DevicePath {
    pub fn new(room: impl Into<String>, device_type: impl Into<String>, device: impl Into<String>) -> Self {
        Self {
            room: room.into(),
            device_type: device_type.into(),
            device: device.into(),
        }
    }
}

impl fmt::Display for DevicePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.room, self.device_type, self.device)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Device {
    pub name: String,
    pub device_type: String,
    pub properties: IndexMap<String, PropertyValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Room {
    pub name: String,
    /// device type → device name → device
    pub devices: IndexMap<String, IndexMap<String, Device>>,
}

impl Room {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            devices: IndexMap::new(),
        }
    }

    /// Adds (or replaces) a device, keeping first-insertion order.
    pub fn with_device<I, K>(mut self, device_type: &str, name: &str, properties: I) -> Self
    where
        I: IntoIterator<Item = (K, PropertyValue)>,
        K: Into<String>,
    {
        let device = Device {
            name: name.to_owned(),
            device_type: device_type.to_owned(),
            properties: properties.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        };
        self.devices
            .entry(device_type.to_owned())
            .or_default()
            .insert(name.to_owned(), device);
        self
    }

    pub fn device_count(&self) -> usize {
        self.devices.values().map(IndexMap::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserContext {
    pub location: String,
    /// Additional immutable facts, serialized after `location`.
    pub extra: IndexMap<String, Value>,
}

impl UserContext {
    pub fn at(location: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            extra: IndexMap::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("location".into(), Value::String(self.location.clone()));
        for (k, v) in &self.extra {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }
}

/// User context plus the device tree. Immutable once built; new states are
/// produced by applying change sets to a copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomeContext {
    user: UserContext,
    rooms: IndexMap<String, Room>,
}

impl HomeContext {
    pub fn new(user: UserContext, rooms: impl IntoIterator<Item = Room>) -> Result<Self, ContextError> {
        let mut map = IndexMap::new();
        for room in rooms {
            if map.contains_key(&room.name) {
                return Err(ContextError::Structure(format!("duplicate room {:?}", room.name)));
            }
            map.insert(room.name.clone(), room);
        }
        if map.is_empty() {
            return Err(ContextError::Structure("device context has no rooms".into()));
        }
        if !map.contains_key(&user.location) {
            return Err(ContextError::Structure(format!(
                "user location {:?} is not a room in the device context",
                user.location
            )));
        }
        Ok(Self { user, rooms: map })
    }

    pub fn user(&self) -> &UserContext {
        &self.user
    }

    pub fn rooms(&self) -> impl Iterator<Item = &Room> {
        self.rooms.values()
    }

    pub fn room(&self, name: &str) -> Option<&Room> {
        self.rooms.get(name)
    }

    pub fn device(&self, path: &DevicePath) -> Option<&Device> {
        self.rooms
            .get(&path.room)?
            .devices
            .get(&path.device_type)?
            .get(&path.device)
    }

    pub fn property(&self, path: &DevicePath, property: &str) -> Option<&PropertyValue> {
        self.device(path)?.properties.get(property)
    }

    /// Every device in document order.
    pub fn devices(&self) -> impl Iterator<Item = (DevicePath, &Device)> {
        self.rooms.values().flat_map(|room| {
            room.devices.iter().flat_map(move |(ty, devs)| {
                devs.values()
                    .map(move |d| (DevicePath::new(&room.name, ty, &d.name), d))
            })
        })
    }

    pub fn device_count(&self) -> usize {
        self.rooms.values().map(Room::device_count).sum()
    }

    pub fn property_count(&self) -> usize {
        self.devices().map(|(_, d)| d.properties.len()).sum()
    }

    /// Returns a copy with one existing property replaced. `None` when the
    /// device or property does not exist.
    pub fn with_property(&self, path: &DevicePath, property: &str, value: PropertyValue) -> Option<Self> {
        let mut next = self.clone();
        let slot = next
            .rooms
            .get_mut(&path.room)?
            .devices
            .get_mut(&path.device_type)?
            .get_mut(&path.device)?
            .properties
            .get_mut(property)?;
        *slot = value;
        Some(next)
    }

    /// The `{"devices": ...}` document.
    pub fn devices_json(&self) -> Value {
        let mut devices = Map::new();
        for room in self.rooms.values() {
            let mut types = Map::new();
            for (ty, devs) in &room.devices {
                let mut named = Map::new();
                for d in devs.values() {
                    let props: Map<String, Value> =
                        d.properties.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                    named.insert(d.name.clone(), Value::Object(props));
                }
                types.insert(ty.clone(), Value::Object(named));
            }
            devices.insert(room.name.clone(), Value::Object(types));
        }
        let mut doc = Map::new();
        doc.insert("devices".into(), Value::Object(devices));
        Value::Object(doc)
    }

    /// The `{"user": ...}` document.
    pub fn user_json(&self) -> Value {
        let mut doc = Map::new();
        doc.insert("user".into(), self.user.to_json());
        Value::Object(doc)
    }

    pub fn to_json(&self) -> Value {
        let mut doc = Map::new();
        doc.insert("user".into(), self.user.to_json());
        doc.insert(
            "devices".into(),
            self.devices_json()
                .as_object_mut()
                .and_then(|m| m.remove("devices"))
                .unwrap_or_default(),
        );
        Value::Object(doc)
    }

    pub fn from_json(doc: &Value) -> Result<Self, ContextError> {
        let top = doc
            .as_object()
            .ok_or_else(|| ContextError::Structure("context document must be an object".into()))?;
        let user = top
            .get("user")
            .ok_or_else(|| ContextError::Structure("missing \"user\" block".into()))?;
        let devices = top
            .get("devices")
            .ok_or_else(|| ContextError::Structure("missing \"devices\" block".into()))?;
        let user = parse_user(user)?;
        let rooms = parse_devices(devices)?;
        Self::new(user, rooms)
    }
}

fn parse_user(value: &Value) -> Result<UserContext, ContextError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ContextError::Structure("\"user\" must be an object".into()))?;
    let location = obj
        .get("location")
        .and_then(Value::as_str)
        .ok_or_else(|| ContextError::Structure("\"user\" needs a string \"location\"".into()))?;
    let extra = obj
        .iter()
        .filter(|(k, _)| k.as_str() != "location")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(UserContext {
        location: location.to_owned(),
        extra,
    })
}

fn object<'a>(value: &'a Value, what: &str) -> Result<&'a Map<String, Value>, ContextError> {
    value
        .as_object()
        .ok_or_else(|| ContextError::Structure(format!("{what} must be an object, found {value}")))
}

/// Parses the room → type → device → property tree (the value of "devices").
pub(crate) fn parse_devices(value: &Value) -> Result<Vec<Room>, ContextError> {
    let mut rooms = Vec::new();
    for (room_name, types) in object(value, "\"devices\"")? {
        let mut room = Room::new(room_name);
        for (ty, devices) in object(types, &format!("room {room_name:?}"))? {
            let mut named = IndexMap::new();
            for (dev_name, props) in object(devices, &format!("{room_name}.{ty}"))? {
                let mut properties = IndexMap::new();
                for (prop, raw) in object(props, &format!("{room_name}.{ty}.{dev_name}"))? {
                    let v = PropertyValue::from_json(raw).ok_or_else(|| {
                        ContextError::Structure(format!("{room_name}.{ty}.{dev_name}.{prop}: unsupported value {raw}"))
                    })?;
                    properties.insert(prop.clone(), v);
                }
                named.insert(
                    dev_name.clone(),
                    Device {
                        name: dev_name.clone(),
                        device_type: ty.clone(),
                        properties,
                    },
                );
            }
            room.devices.insert(ty.clone(), named);
        }
        rooms.push(room);
    }
    Ok(rooms)
}

pub fn parse_context(text: &str) -> Result<HomeContext, ContextError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ContextError::Syntax(e.to_string()))?;
    HomeContext::from_json(&doc)
}

/// Canonical form: two-space indentation, keys in insertion order.
pub fn serialize_context(c: &HomeContext) -> String {
    to_pretty(&c.to_json())
}

pub(crate) fn to_pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializing a JSON value cannot fail")
}

/// The two-room example home: bedroom lamp off, living room overhead on,
/// lamp off and a TV at volume 20, user in the living room.
pub fn example_home() -> HomeContext {
    HomeContext::new(
        UserContext::at("living_room"),
        [
            Room::new("bedroom").with_device("lights", "bedside_lamp", [("state", PropertyValue::off())]),
            Room::new("living_room")
                .with_device("lights", "overhead", [("state", PropertyValue::on())])
                .with_device("lights", "lamp", [("state", PropertyValue::off())])
                .with_device(
                    "tvs",
                    "living_room_tv",
                    [("state", PropertyValue::off()), ("volume", PropertyValue::Integer(20))],
                ),
        ],
    )
    .expect("example home is well-formed")
}
