use std::path::PathBuf;

use casa::gateway::BackendKind;
use casa::service::{Controller, ServiceConfig, ServiceMode};

fn demo(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(name)
}

#[test]
fn shipped_configs_load() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["config.toml", "config.remote.toml"] {
        let mut cfg = ServiceConfig::load(&demo(name)).unwrap();
        // keep the demo directory free of test event logs
        cfg.event_log = Some(dir.path().join(format!("{name}.jsonl")));
        let c = Controller::from_config(&cfg).unwrap();
        assert_eq!(c.mode(), ServiceMode::Review);
        assert_eq!(c.get_state().device_count(), 3);
        assert_eq!(cfg.backend.kind, if name == "config.toml" { BackendKind::Mock } else { BackendKind::Remote });
    }
}
