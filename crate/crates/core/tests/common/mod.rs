//! Helpers shared by integration tests (also included by the cli acceptance run).
#![allow(dead_code)]

use std::path::PathBuf;

use casa::context::{parse_context, DevicePath, HomeContext, PropertyValue, Room, UserContext};
use casa::gateway::BackendConfig;
use casa::response::ValidationPolicy;
use casa::schema::{PropertyKind, SchemaRegistry};
use casa::service::{Controller, ControllerParts, EventLog, ServiceMode};
use casa::simulator::{AdapterBinding, Bindings, SimulatedBridge};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn golden_prompt_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/prompt_example.txt")
}

pub fn e2e_home() -> HomeContext {
    parse_context(&std::fs::read_to_string(fixtures_dir().join("e2e/home.json")).unwrap()).unwrap()
}

pub struct Step {
    pub name: String,
    pub command: String,
    pub expected: HomeContext,
}

/// The six scripted commands with their expected state, in order.
pub fn e2e_steps() -> Vec<Step> {
    let mut files: Vec<_> = std::fs::read_dir(fixtures_dir().join("e2e"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "home.json")
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let doc: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
            Step {
                name: p.file_stem().unwrap().to_string_lossy().into_owned(),
                command: doc["command"].as_str().unwrap().to_owned(),
                expected: HomeContext::from_json(&doc["expected"]).unwrap(),
            }
        })
        .collect()
}

/// Hue group 1 and the stereo plug on a simulated bridge, the bedside lamp in memory.
pub async fn session(mode: ServiceMode, events: EventLog) -> (Controller, SimulatedBridge) {
    let bridge = SimulatedBridge::start().await.unwrap();
    bridge.seed_group(1, json!({ "on": false, "bri": 127, "effect": "none" }));
    bridge.seed_plug("stereo", "off");
    let context = e2e_home();
    let bindings = Bindings::new(vec![
        AdapterBinding::hue_group(
            DevicePath::new("living_room", "lights", "hue_group"),
            bridge.base_url(),
            1,
        ),
        AdapterBinding::smart_plug(DevicePath::new("living_room", "plugs", "stereo"), bridge.base_url()),
        AdapterBinding::in_memory(DevicePath::new("bedroom", "lights", "bedside_lamp")),
    ])
    .unwrap();
    let controller = Controller::new(ControllerParts {
        context,
        registry: SchemaRegistry::hue_demo(),
        bindings,
        backend: BackendConfig::mock(),
        mode,
        policy: ValidationPolicy::DropInvalidFields,
        events,
    })
    .unwrap();
    (controller, bridge)
}

fn ident<R: Rng>(rng: &mut R, prefix: &str) -> String {
    format!("{prefix}_{}", rng.random_range(0..10_000))
}

/// A random context that validates against `reg`: up to `max_rooms` rooms
/// with up to `max_devices` devices each, every schema property present.
pub fn random_context<R: Rng>(rng: &mut R, reg: &SchemaRegistry, max_rooms: usize, max_devices: usize) -> HomeContext {
    let types: Vec<&str> = reg.device_types().collect();
    let n_rooms = rng.random_range(1..=max_rooms);
    let mut rooms = Vec::new();
    let mut used = std::collections::HashSet::new();
    while rooms.len() < n_rooms {
        let name = ident(rng, "room");
        if !used.insert(name.clone()) {
            continue;
        }
        let mut room = Room::new(&name);
        for _ in 0..rng.random_range(1..=max_devices) {
            let ty = *types.choose(rng).unwrap();
            let dev = ident(rng, "dev");
            let props: Vec<(String, PropertyValue)> = reg
                .get(ty)
                .unwrap()
                .properties
                .values()
                .map(|p| (p.name.clone(), random_value(rng, p)))
                .collect();
            room = room.with_device(ty, &dev, props);
        }
        rooms.push(room);
    }
    let names: Vec<String> = rooms.iter().map(|r| r.name.clone()).collect();
    let mut user = UserContext::at(names.choose(rng).unwrap().clone());
    if rng.random_bool(0.5) {
        user.extra.insert("name".into(), json!(ident(rng, "user")));
    }
    HomeContext::new(user, rooms).unwrap()
}

pub fn random_value<R: Rng>(rng: &mut R, p: &casa::schema::PropertySchema) -> PropertyValue {
    match p.kind {
        PropertyKind::Switch => {
            if rng.random_bool(0.5) {
                PropertyValue::on()
            } else {
                PropertyValue::off()
            }
        }
        PropertyKind::Integer => {
            PropertyValue::Integer(rng.random_range(p.min.unwrap_or(-1000)..=p.max.unwrap_or(1000)))
        }
        PropertyKind::Text => match &p.allowed {
            Some(allowed) => PropertyValue::text(allowed.choose(rng).unwrap().clone()),
            None => PropertyValue::text(ident(rng, "t")),
        },
    }
}
