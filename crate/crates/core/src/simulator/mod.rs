//! Ground-truth device state plus the adapters that carry changes to devices.

mod adapters;
mod bridge;

use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use indexmap::IndexMap;
use serde_json::Value;
use thiserror::Error;

use crate::context::{DevicePath, HomeContext, PropertyValue};
use crate::response::{Change, ChangeSet};

pub use adapters::{hue_group_payload, smart_plug_payload, AdapterBinding, AdapterKind, Bindings, Method, WireCommand};
pub use bridge::SimulatedBridge;

use adapters::{hue_to_properties, AdapterTarget};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimulatorError {
    #[error("stale change at {path}.{property}: expected {expected}, found {found}")]
    StaleChange {
        path: String,
        property: String,
        expected: String,
        found: String,
    },
    #[error("no adapter bound to {0}")]
    UnboundDevice(DevicePath),
    #[error("more than one binding for {0}")]
    DuplicateBinding(DevicePath),
    #[error("invalid binding: {0}")]
    InvalidBinding(String),
    #[error("unsupported property {path}: {reason}")]
    UnsupportedProperty { path: String, reason: String },
    #[error("conflicting changes for hue group {group_id}: {detail}")]
    ConflictingGroupChange { group_id: u32, detail: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("adapter rejected command: {0}")]
    AdapterRejected(String),
}

impl SimulatorError {
    pub fn class(&self) -> &'static str {
        match self {
            SimulatorError::StaleChange { .. } => "stale_change",
            SimulatorError::UnboundDevice(_) => "unbound_device",
            SimulatorError::DuplicateBinding(_) | SimulatorError::InvalidBinding(_) => "invalid_binding",
            SimulatorError::UnsupportedProperty { .. } => "unsupported_property",
            SimulatorError::ConflictingGroupChange { .. } => "conflicting_group_change",
            SimulatorError::Transport(_) => "transport_error",
            SimulatorError::AdapterRejected(_) => "adapter_rejected",
        }
    }
}

/// A wire command together with the adapter address it went to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentCommand {
    pub address: String,
    pub command: WireCommand,
}

#[derive(Debug, Clone)]
pub struct ApplyOutcome {
    pub state: Arc<HomeContext>,
    pub wire: Vec<WireCommand>,
}

/// Holds the live home state. Writes are serialized; reads take a snapshot.
pub struct HomeSimulator {
    state: RwLock<Arc<HomeContext>>,
    bindings: Bindings,
    writer: tokio::sync::Mutex<()>,
    client: reqwest::Client,
    sent: Mutex<Vec<SentCommand>>,
}

impl HomeSimulator {
    pub fn new(initial: HomeContext, bindings: Bindings) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .build()
            .expect("default HTTP client builds");
        Self {
            state: RwLock::new(Arc::new(initial)),
            bindings,
            writer: tokio::sync::Mutex::new(()),
            client,
            sent: Mutex::new(Vec::new()),
        }
    }

    /// Every device bound in memory.
    pub fn in_memory(initial: HomeContext) -> Self {
        let bindings = Bindings::in_memory(&initial);
        Self::new(initial, bindings)
    }

    pub fn snapshot(&self) -> Arc<HomeContext> {
        self.state.read().unwrap().clone()
    }

    pub fn bindings(&self) -> &Bindings {
        &self.bindings
    }

    /// All wire commands successfully delivered so far (compensations included).
    pub fn sent(&self) -> Vec<SentCommand> {
        self.sent.lock().unwrap().clone()
    }

    /// Applies every change or none. Each change's `old` must equal the
    /// stored value. One wire command goes to each network adapter touched.
    pub async fn apply_changeset(&self, cs: &ChangeSet) -> Result<ApplyOutcome, SimulatorError> {
        let _guard = self.writer.lock().await;
        let current = self.snapshot();
        let next = fold_changes(&current, &cs.changes)?;

        let mut groups: IndexMap<AdapterTarget, Vec<&Change>> = IndexMap::new();
        for change in &cs.changes {
            let path = change.device_path();
            let binding = self.bindings.get(&path).ok_or(SimulatorError::UnboundDevice(path))?;
            if binding.kind != AdapterKind::InMemory {
                groups.entry(binding.target()).or_default().push(change);
            }
        }
        let plan = groups
            .iter()
            .map(|(target, changes)| Ok((target, payload(target, changes.iter().copied())?)))
            .collect::<Result<Vec<_>, SimulatorError>>()?;

        let mut delivered = Vec::new();
        for (target, command) in &plan {
            if let Err(e) = self.send(&target.address, command).await {
                self.compensate(&groups, &delivered).await;
                return Err(e);
            }
            delivered.push(*target);
        }

        let next = Arc::new(next);
        *self.state.write().unwrap() = next.clone();
        Ok(ApplyOutcome {
            state: next,
            wire: plan.into_iter().map(|(_, c)| c).collect(),
        })
    }

    /// Best-effort undo for adapters that already accepted their command.
    async fn compensate(&self, groups: &IndexMap<AdapterTarget, Vec<&Change>>, delivered: &[&AdapterTarget]) {
        for target in delivered {
            let inverse: Vec<Change> = groups[*target]
                .iter()
                .map(|c| Change {
                    old: c.new.clone(),
                    new: c.old.clone(),
                    ..(*c).clone()
                })
                .collect();
            match payload(target, inverse.iter()) {
                Ok(cmd) => {
                    if let Err(e) = self.send(&target.address, &cmd).await {
                        tracing::error!(address = %target.address, error = %e, "compensation failed");
                    }
                }
                Err(e) => tracing::error!(error = %e, "compensation payload failed"),
            }
        }
    }

    async fn send(&self, address: &str, command: &WireCommand) -> Result<(), SimulatorError> {
        let url = format!("{}{}", address.trim_end_matches('/'), command.path);
        let method = match command.method {
            Method::Put => reqwest::Method::PUT,
            Method::Post => reqwest::Method::POST,
            Method::Get => reqwest::Method::GET,
        };
        let resp = self
            .client
            .request(method, &url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(command.body.clone())
            .send()
            .await
            .map_err(|e| SimulatorError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SimulatorError::AdapterRejected(format!(
                "{url} answered {}",
                resp.status()
            )));
        }
        self.sent.lock().unwrap().push(SentCommand {
            address: address.to_owned(),
            command: command.clone(),
        });
        Ok(())
    }

    /// Current property map as reported by the device's adapter.
    pub async fn read_adapter_state(
        &self,
        binding: &AdapterBinding,
    ) -> Result<IndexMap<String, PropertyValue>, SimulatorError> {
        match binding.kind {
            AdapterKind::InMemory => self
                .snapshot()
                .device(&binding.path)
                .map(|d| d.properties.clone())
                .ok_or_else(|| SimulatorError::UnboundDevice(binding.path.clone())),
            AdapterKind::HueGroup => {
                let id = binding.group_id.unwrap_or_default();
                let doc = self.fetch(&binding.address, &format!("/groups/{id}")).await?;
                let action = doc
                    .get("action")
                    .and_then(Value::as_object)
                    .ok_or_else(|| SimulatorError::AdapterRejected("group document lacks \"action\"".into()))?;
                Ok(hue_to_properties(action).into_iter().collect())
            }
            AdapterKind::SmartPlug => {
                let doc = self
                    .fetch(&binding.address, &format!("/plug/{}", binding.path.device))
                    .await?;
                let state = doc
                    .get("state")
                    .and_then(Value::as_str)
                    .ok_or_else(|| SimulatorError::AdapterRejected("plug document lacks \"state\"".into()))?;
                Ok([("state".to_owned(), PropertyValue::text(state))].into_iter().collect())
            }
        }
    }

    async fn fetch(&self, address: &str, path: &str) -> Result<Value, SimulatorError> {
        let url = format!("{}{path}", address.trim_end_matches('/'));
        let resp = self
            .client
            .get(&url)
            .send()
            .await
            .map_err(|e| SimulatorError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SimulatorError::AdapterRejected(format!(
                "{url} answered {}",
                resp.status()
            )));
        }
        resp.json().await.map_err(|e| SimulatorError::Transport(e.to_string()))
    }
}

fn payload<'a>(
    target: &AdapterTarget,
    changes: impl IntoIterator<Item = &'a Change>,
) -> Result<WireCommand, SimulatorError> {
    match target.kind {
        AdapterKind::HueGroup => hue_group_payload(target.id.parse().unwrap_or_default(), changes),
        AdapterKind::SmartPlug => smart_plug_payload(&target.id, changes),
        AdapterKind::InMemory => unreachable!("in-memory adapters have no wire dialect"),
    }
}

/// Applies changes in order after checking each old value. Pure; used by
/// the simulator and by event-log replay.
pub fn fold_changes(current: &HomeContext, changes: &[Change]) -> Result<HomeContext, SimulatorError> {
    let mut next = current.clone();
    for change in changes {
        let path = change.device_path();
        let stale = |found: String| SimulatorError::StaleChange {
            path: path.to_string(),
            property: change.property.clone(),
            expected: change.old.to_string(),
            found,
        };
        match next.property(&path, &change.property) {
            Some(v) if *v == change.old => {}
            Some(v) => return Err(stale(v.to_string())),
            None => return Err(stale("<absent>".into())),
        }
        next = next
            .with_property(&path, &change.property, change.new.clone())
            .expect("property checked above");
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{example_home, Room, UserContext};

    fn lamp_on() -> ChangeSet {
        ChangeSet {
            changes: vec![Change {
                room: "living_room".into(),
                device_type: "lights".into(),
                device: "lamp".into(),
                property: "state".into(),
                old: PropertyValue::off(),
                new: PropertyValue::on(),
            }],
            dropped: vec![],
        }
    }

    fn group_home() -> HomeContext {
        HomeContext::new(
            UserContext::at("living_room"),
            [Room::new("living_room")
                .with_device(
                    "lights",
                    "hue_group",
                    [
                        ("state", PropertyValue::off()),
                        ("brightness", PropertyValue::Integer(127)),
                        ("effect", PropertyValue::text("none")),
                    ],
                )
                .with_device("plugs", "stereo", [("state", PropertyValue::off())])],
        )
        .unwrap()
    }

    fn party_changes() -> ChangeSet {
        let mk = |ty: &str, dev: &str, prop: &str, old: PropertyValue, new: PropertyValue| Change {
            room: "living_room".into(),
            device_type: ty.into(),
            device: dev.into(),
            property: prop.into(),
            old,
            new,
        };
        ChangeSet {
            changes: vec![
                mk("plugs", "stereo", "state", PropertyValue::off(), PropertyValue::on()),
                mk(
                    "lights",
                    "hue_group",
                    "state",
                    PropertyValue::off(),
                    PropertyValue::on(),
                ),
                mk(
                    "lights",
                    "hue_group",
                    "effect",
                    PropertyValue::text("none"),
                    PropertyValue::text("colorloop"),
                ),
            ],
            dropped: vec![],
        }
    }

    fn bridge_bindings(url: &str) -> Bindings {
        Bindings::new(vec![
            AdapterBinding::hue_group(DevicePath::new("living_room", "lights", "hue_group"), url, 1),
            AdapterBinding::smart_plug(DevicePath::new("living_room", "plugs", "stereo"), url),
        ])
        .unwrap()
    }

    #[tokio::test]
    async fn empty_changeset_is_identity() {
        let sim = HomeSimulator::in_memory(example_home());
        let out = sim.apply_changeset(&ChangeSet::default()).await.unwrap();
        assert!(out.wire.is_empty());
        assert_eq!(*out.state, example_home());
    }

    #[tokio::test]
    async fn second_application_is_stale() {
        let sim = HomeSimulator::in_memory(example_home());
        sim.apply_changeset(&lamp_on()).await.unwrap();
        let before = serialize(&sim);
        let err = sim.apply_changeset(&lamp_on()).await.unwrap_err();
        assert!(matches!(err, SimulatorError::StaleChange { .. }), "{err}");
        assert_eq!(serialize(&sim), before);
    }

    fn serialize(sim: &HomeSimulator) -> String {
        crate::context::serialize_context(&sim.snapshot())
    }

    #[tokio::test]
    async fn partial_staleness_applies_nothing() {
        let sim = HomeSimulator::in_memory(example_home());
        let mut cs = lamp_on();
        cs.changes.push(Change {
            device: "overhead".into(),
            old: PropertyValue::off(), // actually on
            new: PropertyValue::on(),
            ..cs.changes[0].clone()
        });
        assert!(sim.apply_changeset(&cs).await.is_err());
        assert_eq!(*sim.snapshot(), example_home());
    }

    #[tokio::test]
    async fn unbound_device() {
        let sim = HomeSimulator::new(example_home(), Bindings::default());
        assert!(matches!(
            sim.apply_changeset(&lamp_on()).await,
            Err(SimulatorError::UnboundDevice(_))
        ));
    }

    #[tokio::test]
    async fn stereo_and_group_emit_two_commands() {
        let bridge = SimulatedBridge::start().await.unwrap();
        let sim = HomeSimulator::new(group_home(), bridge_bindings(&bridge.base_url()));
        let out = sim.apply_changeset(&party_changes()).await.unwrap();
        assert_eq!(out.wire.len(), 2);
        assert_eq!(out.wire[0].path, "/plug/stereo");
        assert_eq!(out.wire[1].body, r#"{"on": true, "effect": "colorloop"}"#);
        assert_eq!(bridge.received(), out.wire);

        let group = sim
            .read_adapter_state(
                sim.bindings()
                    .get(&DevicePath::new("living_room", "lights", "hue_group"))
                    .unwrap(),
            )
            .await
            .unwrap();
        assert_eq!(group["state"], PropertyValue::on());
        assert_eq!(group["effect"], PropertyValue::text("colorloop"));
        let plug = sim
            .read_adapter_state(
                sim.bindings()
                    .get(&DevicePath::new("living_room", "plugs", "stereo"))
                    .unwrap(),
            )
            .await
            .unwrap();
        assert_eq!(plug["state"], PropertyValue::on());
        assert_eq!(
            sim.snapshot()
                .property(&DevicePath::new("living_room", "plugs", "stereo"), "state"),
            Some(&PropertyValue::on())
        );
    }

    #[tokio::test]
    async fn one_group_covers_several_lights() {
        let bridge = SimulatedBridge::start().await.unwrap();
        let url = bridge.base_url();
        let home = example_home();
        let bindings = Bindings::in_memory(&home)
            .with(AdapterBinding::hue_group(
                DevicePath::new("living_room", "lights", "overhead"),
                &url,
                2,
            ))
            .with(AdapterBinding::hue_group(
                DevicePath::new("living_room", "lights", "lamp"),
                &url,
                2,
            ));
        let sim = HomeSimulator::new(home, bindings);
        let mut cs = lamp_on();
        cs.changes.push(Change {
            room: "bedroom".into(),
            device: "bedside_lamp".into(),
            ..cs.changes[0].clone()
        });
        let out = sim.apply_changeset(&cs).await.unwrap();
        assert_eq!(
            out.wire,
            vec![WireCommand {
                method: Method::Put,
                path: "/groups/2/action".into(),
                body: r#"{"on": true}"#.into()
            }]
        );
    }

    #[tokio::test]
    async fn transport_failure_is_atomic_and_compensated() {
        let bridge = SimulatedBridge::start().await.unwrap();
        let bindings = Bindings::new(vec![
            AdapterBinding::smart_plug(DevicePath::new("living_room", "plugs", "stereo"), bridge.base_url()),
            // nothing listens on port 9
            AdapterBinding::hue_group(
                DevicePath::new("living_room", "lights", "hue_group"),
                "http://127.0.0.1:9",
                1,
            ),
        ])
        .unwrap();
        let sim = HomeSimulator::new(group_home(), bindings);
        let before = serialize(&sim);
        let err = sim.apply_changeset(&party_changes()).await.unwrap_err();
        assert!(matches!(err, SimulatorError::Transport(_)), "{err}");
        assert_eq!(serialize(&sim), before);
        let bodies: Vec<_> = bridge.received().into_iter().map(|c| c.body).collect();
        assert_eq!(bodies, [r#"{"state": "on"}"#, r#"{"state": "off"}"#]);
    }

    #[tokio::test]
    async fn unsupported_property_sends_nothing() {
        let bridge = SimulatedBridge::start().await.unwrap();
        let sim = HomeSimulator::new(group_home(), bridge_bindings(&bridge.base_url()));
        let mut cs = party_changes();
        cs.changes[2].property = "brightness".into();
        cs.changes[2].old = PropertyValue::Integer(127);
        cs.changes[2].new = PropertyValue::Integer(300);
        assert!(matches!(
            sim.apply_changeset(&cs).await,
            Err(SimulatorError::UnsupportedProperty { .. })
        ));
        assert!(bridge.received().is_empty());
    }

    #[tokio::test]
    async fn unreachable_read_is_transport_error() {
        let sim = HomeSimulator::in_memory(group_home());
        let binding =
            AdapterBinding::smart_plug(DevicePath::new("living_room", "plugs", "stereo"), "http://127.0.0.1:9");
        assert!(matches!(
            sim.read_adapter_state(&binding).await,
            Err(SimulatorError::Transport(_))
        ));
    }

    #[tokio::test]
    async fn in_memory_readback() {
        let sim = HomeSimulator::in_memory(example_home());
        sim.apply_changeset(&lamp_on()).await.unwrap();
        let b = sim
            .bindings()
            .get(&DevicePath::new("living_room", "lights", "lamp"))
            .unwrap()
            .clone();
        let props = sim.read_adapter_state(&b).await.unwrap();
        assert_eq!(props["state"], PropertyValue::on());
    }

    #[tokio::test]
    async fn identical_changesets_identical_wire() {
        let a = SimulatedBridge::start().await.unwrap();
        let b = SimulatedBridge::start().await.unwrap();
        let wa = HomeSimulator::new(group_home(), bridge_bindings(&a.base_url()))
            .apply_changeset(&party_changes())
            .await
            .unwrap()
            .wire;
        let wb = HomeSimulator::new(group_home(), bridge_bindings(&b.base_url()))
            .apply_changeset(&party_changes())
            .await
            .unwrap()
            .wire;
        assert_eq!(wa, wb);
    }
}
