//! Per-device-type property constraints and context validation.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::context::{HomeContext, PropertyValue, Switch};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("registry syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid schema for {device_type}.{property}: {reason}")]
    Invalid {
        device_type: String,
        property: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Switch,
    Integer,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    UnknownDeviceType,
    /// Room or device name absent from the current context.
    UnknownDevice,
    InventedField,
    OutOfRange,
    WrongKind,
    DisallowedValue,
    ImmutableViolation,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted path, e.g. `living_room.plugs.stereo.genre`.
    pub path: String,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySchema {
    #[serde(skip)]
    pub name: String,
    pub kind: PropertyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<String>>,
    #[serde(default = "default_mutable")]
    pub mutable: bool,
}

fn default_mutable() -> bool {
    true
}

impl PropertySchema {
    pub fn switch(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: PropertyKind::Switch,
            min: None,
            max: None,
            allowed: None,
            mutable: true,
        }
    }

    pub fn integer(name: &str, min: i64, max: i64) -> Self {
        Self {
            kind: PropertyKind::Integer,
            min: Some(min),
            max: Some(max),
            ..Self::switch(name)
        }
    }

    pub fn text(name: &str, allowed: Option<&[&str]>) -> Self {
        Self {
            kind: PropertyKind::Text,
            allowed: allowed.map(|a| a.iter().map(|s| (*s).to_owned()).collect()),
            ..Self::switch(name)
        }
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    fn check_well_formed(&self, device_type: &str) -> Result<(), SchemaError> {
        let invalid = |reason: &str| SchemaError::Invalid {
            device_type: device_type.to_owned(),
            property: self.name.clone(),
            reason: reason.to_owned(),
        };
        if let (Some(lo), Some(hi)) = (self.min, self.max) {
            if lo > hi {
                return Err(invalid("min exceeds max"));
            }
        }
        if (self.min.is_some() || self.max.is_some()) && self.kind != PropertyKind::Integer {
            return Err(invalid("range given for a non-integer property"));
        }
        match (&self.allowed, self.kind) {
            (Some(a), PropertyKind::Text) if a.is_empty() => Err(invalid("empty allowed set")),
            (Some(_), PropertyKind::Text) | (None, _) => Ok(()),
            (Some(_), _) => Err(invalid("allowed set given for a non-text property")),
        }
    }

    /// Interprets a proposed JSON value under this schema. Switch values are
    /// matched case-insensitively; integral floats count as integers.
    pub fn coerce(&self, value: &Value) -> Result<PropertyValue, (ViolationKind, String)> {
        let wrong = || {
            (
                ViolationKind::WrongKind,
                format!("expected {:?}, got {value}", self.kind),
            )
        };
        let v = match (self.kind, value) {
            (PropertyKind::Switch, Value::String(s)) => match Switch::parse(&s.to_lowercase()) {
                Some(sw) => PropertyValue::Switch(sw),
                None => {
                    return Err((
                        ViolationKind::DisallowedValue,
                        format!("{s:?} is not \"on\" or \"off\""),
                    ))
                }
            },
            (PropertyKind::Integer, Value::Number(n)) => match n.as_i64() {
                Some(i) => PropertyValue::Integer(i),
                None => match n.as_f64() {
                    Some(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => PropertyValue::Integer(f as i64),
                    _ => return Err(wrong()),
                },
            },
            (PropertyKind::Text, Value::String(s)) => PropertyValue::text(s.as_str()),
            _ => return Err(wrong()),
        };
        self.check(&v)?;
        Ok(v)
    }

    /// Checks an already-typed value against kind, range and allowed set.
    pub fn check(&self, value: &PropertyValue) -> Result<(), (ViolationKind, String)> {
        match (self.kind, value) {
            (PropertyKind::Switch, PropertyValue::Switch(_)) => Ok(()),
            (PropertyKind::Integer, PropertyValue::Integer(i)) => {
                let lo = self.min.unwrap_or(i64::MIN);
                let hi = self.max.unwrap_or(i64::MAX);
                if (lo..=hi).contains(i) {
                    Ok(())
                } else {
                    Err((ViolationKind::OutOfRange, format!("{i} outside [{lo}, {hi}]")))
                }
            }
            (PropertyKind::Text, PropertyValue::Text(_) | PropertyValue::Switch(_)) => {
                let s = value.as_text().unwrap_or_default();
                match &self.allowed {
                    Some(allowed) if !allowed.iter().any(|a| a == s) => {
                        Err((ViolationKind::DisallowedValue, format!("{s:?} not in {allowed:?}")))
                    }
                    _ => Ok(()),
                }
            }
            _ => Err((
                ViolationKind::WrongKind,
                format!("expected {:?}, got {value}", self.kind),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSchema {
    pub device_type: String,
    pub properties: IndexMap<String, PropertySchema>,
}

impl DeviceSchema {
    pub fn new(device_type: &str, properties: impl IntoIterator<Item = PropertySchema>) -> Self {
        Self {
            device_type: device_type.to_owned(),
            properties: properties.into_iter().map(|p| (p.name.clone(), p)).collect(),
        }
    }

    pub fn property(&self, name: &str) -> Option<&PropertySchema> {
        self.properties.get(name)
    }
}

/// Device-type keyed constraint set. Serialized as
/// `device_type → property → {kind, min, max, allowed, mutable}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchemaRegistry {
    schemas: IndexMap<String, DeviceSchema>,
}

impl SchemaRegistry {
    pub fn new(schemas: impl IntoIterator<Item = DeviceSchema>) -> Result<Self, SchemaError> {
        let mut map = IndexMap::new();
        for s in schemas {
            for p in s.properties.values() {
                p.check_well_formed(&s.device_type)?;
            }
            map.insert(s.device_type.clone(), s);
        }
        Ok(Self { schemas: map })
    }

    pub fn get(&self, device_type: &str) -> Option<&DeviceSchema> {
        self.schemas.get(device_type)
    }

    pub fn device_types(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        let doc: IndexMap<String, IndexMap<String, PropertySchema>> = serde_json::from_str(text)?;
        Self::new(doc.into_iter().map(|(ty, props)| {
            DeviceSchema {
                device_type: ty,
                properties: props
                    .into_iter()
                    .map(|(name, mut p)| {
                        p.name = name.clone();
                        (name, p)
                    })
                    .collect(),
            }
        }))
    }

    pub fn to_json_string(&self) -> String {
        let doc: IndexMap<&String, &IndexMap<String, PropertySchema>> =
            self.schemas.iter().map(|(k, v)| (k, &v.properties)).collect();
        serde_json::to_string_pretty(&doc).expect("registry serializes")
    }

    /// Lights with on/off state only.
    pub fn simple() -> Self {
        Self::new([DeviceSchema::new("lights", [PropertySchema::switch("state")])]).unwrap()
    }

    /// Lights with state and r/g/b channels in [0, 255].
    pub fn medium() -> Self {
        Self::new([lights_with_color()]).unwrap()
    }

    /// Medium plus TVs and speakers with state and volume.
    pub fn complex() -> Self {
        Self::new([lights_with_color(), media("tvs"), media("speakers")]).unwrap()
    }

    /// A Hue light group (state, brightness, effect) and a smart plug.
    pub fn hue_demo() -> Self {
        Self::new([
            DeviceSchema::new(
                "lights",
                [
                    PropertySchema::switch("state"),
                    PropertySchema::integer("brightness", 0, 254),
                    PropertySchema::text("effect", Some(&["none", "colorloop"])),
                ],
            ),
            DeviceSchema::new("plugs", [PropertySchema::switch("state")]),
        ])
        .unwrap()
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "simple" => Some(Self::simple()),
            "medium" => Some(Self::medium()),
            "complex" => Some(Self::complex()),
            "hue" | "hue_demo" => Some(Self::hue_demo()),
            _ => None,
        }
    }
}

fn lights_with_color() -> DeviceSchema {
    DeviceSchema::new(
        "lights",
        [
            PropertySchema::switch("state"),
            PropertySchema::integer("r", 0, 255),
            PropertySchema::integer("g", 0, 255),
            PropertySchema::integer("b", 0, 255),
        ],
    )
}

fn media(device_type: &str) -> DeviceSchema {
    DeviceSchema::new(
        device_type,
        [
            PropertySchema::switch("state"),
            PropertySchema::integer("volume", 0, 100),
        ],
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every device and property of `c` against `reg`.
pub fn validate_context(c: &HomeContext, reg: &SchemaRegistry) -> ValidationReport {
    let mut violations = Vec::new();
    for (path, device) in c.devices() {
        let Some(schema) = reg.get(&path.device_type) else {
            violations.push(Violation {
                path: path.to_string(),
                kind: ViolationKind::UnknownDeviceType,
                detail: format!("no schema for device type {:?}", path.device_type),
            });
            continue;
        };
        for (prop, value) in &device.properties {
            let at = format!("{path}.{prop}");
            match schema.property(prop) {
                None => violations.push(Violation {
                    path: at,
                    kind: ViolationKind::InventedField,
                    detail: format!("{:?} has no property {prop:?}", path.device_type),
                }),
                Some(ps) => {
                    if let Err((kind, detail)) = ps.check(value) {
                        violations.push(Violation { path: at, kind, detail });
                    }
                }
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{example_home, DevicePath, Room, UserContext};

    fn example_registry() -> SchemaRegistry {
        SchemaRegistry::new([
            DeviceSchema::new("lights", [PropertySchema::switch("state")]),
            DeviceSchema::new(
                "tvs",
                [
                    PropertySchema::switch("state"),
                    PropertySchema::integer("volume", 0, 100),
                ],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn example_home_is_valid() {
        assert!(validate_context(&example_home(), &example_registry()).is_empty());
        assert!(validate_context(&example_home(), &SchemaRegistry::complex()).is_empty());
    }

    #[test]
    fn out_of_range_channel() {
        let c = HomeContext::new(
            UserContext::at("den"),
            [Room::new("den").with_device(
                "lights",
                "l",
                [("state", PropertyValue::on()), ("r", PropertyValue::Integer(300))],
            )],
        )
        .unwrap();
        let report = validate_context(&c, &SchemaRegistry::medium());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::OutOfRange);
        assert_eq!(report.violations[0].path, "den.lights.l.r");
    }

    #[test]
    fn invented_genre_field() {
        let c = HomeContext::new(
            UserContext::at("living_room"),
            [Room::new("living_room").with_device(
                "plugs",
                "stereo",
                [
                    ("state", PropertyValue::off()),
                    ("genre", PropertyValue::text("groovy")),
                ],
            )],
        )
        .unwrap();
        let report = validate_context(&c, &SchemaRegistry::hue_demo());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::InventedField);
    }

    #[test]
    fn unknown_type_and_wrong_kind() {
        let c = example_home();
        let report = validate_context(&c, &SchemaRegistry::simple());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::UnknownDeviceType);

        let bad = c
            .with_property(
                &DevicePath::new("bedroom", "lights", "bedside_lamp"),
                "state",
                PropertyValue::Integer(1),
            )
            .unwrap();
        let report = validate_context(&bad, &example_registry());
        assert_eq!(report.violations[0].kind, ViolationKind::WrongKind);
    }

    #[test]
    fn coerce_rules() {
        let sw = PropertySchema::switch("state");
        assert_eq!(sw.coerce(&Value::from("ON")), Ok(PropertyValue::on()));
        assert_eq!(
            sw.coerce(&Value::from("dim")).unwrap_err().0,
            ViolationKind::DisallowedValue
        );
        assert_eq!(sw.coerce(&Value::Bool(true)).unwrap_err().0, ViolationKind::WrongKind);
        let int = PropertySchema::integer("r", 0, 255);
        assert_eq!(int.coerce(&Value::from(255.0)), Ok(PropertyValue::Integer(255)));
        assert_eq!(int.coerce(&Value::from(12.5)).unwrap_err().0, ViolationKind::WrongKind);
        assert_eq!(int.coerce(&Value::from(-1)).unwrap_err().0, ViolationKind::OutOfRange);
        let fx = PropertySchema::text("effect", Some(&["none", "colorloop"]));
        assert_eq!(
            fx.coerce(&Value::from("colorloop")),
            Ok(PropertyValue::text("colorloop"))
        );
        assert_eq!(
            fx.coerce(&Value::from("strobe")).unwrap_err().0,
            ViolationKind::DisallowedValue
        );
    }

    #[test]
    fn registry_document_round_trip() {
        for reg in [
            SchemaRegistry::simple(),
            SchemaRegistry::complex(),
            SchemaRegistry::hue_demo(),
        ] {
            let text = reg.to_json_string();
            assert_eq!(SchemaRegistry::from_json_str(&text).unwrap(), reg);
        }
        let doc = r#"{"tvs": {"volume": {"kind": "integer", "min": 0, "max": 100}, "serial": {"kind": "text", "mutable": false}}}"#;
        let reg = SchemaRegistry::from_json_str(doc).unwrap();
        let tvs = reg.get("tvs").unwrap();
        assert!(tvs.property("volume").unwrap().mutable);
        assert!(!tvs.property("serial").unwrap().mutable);
    }

    #[test]
    fn rejects_malformed_schemas() {
        for doc in [
            r#"{"x": {"v": {"kind": "integer", "min": 5, "max": 1}}}"#,
            r#"{"x": {"v": {"kind": "text", "allowed": []}}}"#,
            r#"{"x": {"v": {"kind": "switch", "allowed": ["a"]}}}"#,
        ] {
            assert!(
                matches!(SchemaRegistry::from_json_str(doc), Err(SchemaError::Invalid { .. })),
                "{doc}"
            );
        }
    }
}
