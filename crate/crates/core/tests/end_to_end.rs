mod common;

use std::time::Instant;

use casa::context::PropertyValue;
use casa::schema::ViolationKind;
use casa::service::ProposalStatus;
use casa::service::{replay, Controller, ControllerParts, Decision, EventKind, EventLog, ServiceMode};
use casa::simulator::Method;
use casa::{gateway::BackendConfig, response::ValidationPolicy, schema::SchemaRegistry, simulator::Bindings};

use common::{e2e_home, e2e_steps, session};

#[tokio::test(flavor = "multi_thread")]
async fn scripted_commands_reach_expected_states() {
    let started = Instant::now();
    let (c, bridge) = session(ServiceMode::Auto, EventLog::in_memory()).await;
    for step in e2e_steps() {
        let p = c.handle_command(&step.command).await.unwrap();
        assert_eq!(p.status, ProposalStatus::AutoApplied, "{}: {:?}", step.name, p.error);
        assert_eq!(*c.get_state(), step.expected, "{}", step.name);
        if step.name.ends_with("leaving") {
            assert!(c
                .get_state()
                .devices()
                .all(|(_, d)| d.properties["state"] == PropertyValue::off()));
        }
        if step.name.ends_with("groovy") {
            assert_eq!(p.changeset.dropped.len(), 1);
            assert_eq!(p.changeset.dropped[0].kind, ViolationKind::InventedField);
            assert_eq!(p.changeset.dropped[0].path, "living_room.plugs.stereo.genre");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);

    // every network write reached the bridge, in order, as PUTs
    let received = bridge.received();
    assert!(!received.is_empty());
    assert!(received.iter().all(|w| w.method == Method::Put));
    assert_eq!(
        received,
        c.simulator().sent().into_iter().map(|s| s.command).collect::<Vec<_>>()
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_reconstructs_state_and_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("events.jsonl");
    let (c, _bridge) = session(ServiceMode::Review, EventLog::open(&log_path).unwrap()).await;
    let mut ids = Vec::new();
    for step in e2e_steps() {
        ids.push(c.handle_command(&step.command).await.unwrap().id);
    }
    c.resolve_proposal(&ids[0], Decision::Approve).await.unwrap();
    c.resolve_proposal(&ids[1], Decision::Reject).await.unwrap();
    c.resolve_proposal(&ids[4], Decision::Approve).await.unwrap();
    // built on the initial state, which the first approval changed
    let stale = c.resolve_proposal(&ids[5], Decision::Approve).await.unwrap();
    assert_eq!(stale.status, ProposalStatus::Failed);

    let events = casa::service::events::read_events(&log_path).unwrap();
    assert_eq!(events, c.events().all());
    let r = replay(&e2e_home(), &events).unwrap();
    assert_eq!(r.state, *c.get_state());
    let live: Vec<_> = c.get_history(100).into_iter().rev().collect();
    assert_eq!(r.proposals.into_values().collect::<Vec<_>>(), live);

    // a restarted controller resumes from the log
    let final_state = c.get_state();
    drop(c);
    let (restarted, _bridge2) = session(ServiceMode::Review, EventLog::open(&log_path).unwrap()).await;
    assert_eq!(restarted.get_history(100).len(), 6);
    assert_eq!(restarted.get_proposal(&ids[2]).unwrap().status, ProposalStatus::Pending);
    assert_eq!(restarted.get_state(), final_state);
}

#[tokio::test]
async fn event_kinds_for_one_auto_command() {
    let c = Controller::new(ControllerParts {
        context: e2e_home(),
        registry: SchemaRegistry::hue_demo(),
        bindings: Bindings::in_memory(&e2e_home()),
        backend: BackendConfig::mock(),
        mode: ServiceMode::Auto,
        policy: ValidationPolicy::DropInvalidFields,
        events: EventLog::in_memory(),
    })
    .unwrap();
    c.handle_command("make it groovy").await.unwrap();
    let kinds: Vec<_> = c.events().all().into_iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        [
            EventKind::CommandReceived,
            EventKind::CompletionReceived,
            EventKind::ValidationViolation,
            EventKind::ProposalCreated,
            EventKind::ProposalApplied
        ]
    );
}
