use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ControllerParts, EventLog, ServiceError};
use crate::context::parse_context;
use crate::gateway::BackendConfig;
use crate::response::ValidationPolicy;
use crate::schema::SchemaRegistry;
use crate::simulator::Bindings;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceMode {
    /// Valid changes are applied immediately.
    Auto,
    /// Proposals wait for approval.
    #[default]
    Review,
}

/// Service configuration, read from TOML.
///
/// ```toml
/// mode = "review"
/// listen = "127.0.0.1:8080"
/// context = "home.json"
/// registry = "hue_demo"          # built-in name or path to a JSON file
/// bindings = "bindings.json"     # optional; all in memory when absent
/// event_log = "events.jsonl"     # optional; in memory when absent
///
/// [backend]
/// kind = "mock"
/// ```
///
/// Relative paths resolve against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub mode: ServiceMode,
    #[serde(default = "default_listen")]
    pub listen: String,
    pub context: PathBuf,
    pub registry: String,
    #[serde(default)]
    pub bindings: Option<PathBuf>,
    #[serde(default)]
    pub event_log: Option<PathBuf>,
    #[serde(default)]
    pub policy: ValidationPolicy,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn config_err(what: impl std::fmt::Display) -> ServiceError {
    ServiceError::Config(what.to_string())
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ServiceError> {
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(config_err)?;
        cfg.base_dir = base_dir.to_owned();
        cfg.backend.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    fn read(&self, p: &Path) -> Result<String, ServiceError> {
        let p = self.resolve(p);
        std::fs::read_to_string(&p).map_err(|e| config_err(format!("{}: {e}", p.display())))
    }

    pub fn load_registry(&self) -> Result<SchemaRegistry, ServiceError> {
        if let Some(r) = SchemaRegistry::builtin(&self.registry) {
            return Ok(r);
        }
        SchemaRegistry::from_json_str(&self.read(Path::new(&self.registry))?).map_err(config_err)
    }

    /// Loads every referenced file. Bindings must cover every device.
    pub fn load_parts(&self) -> Result<ControllerParts, ServiceError> {
        let context = parse_context(&self.read(&self.context)?).map_err(config_err)?;
        let registry = self.load_registry()?;
        let bindings = match &self.bindings {
            None => Bindings::in_memory(&context),
            Some(p) => Bindings::from_json_str(&self.read(p)?).map_err(config_err)?,
        };
        if let Some((path, _)) = context.devices().find(|(path, _)| bindings.get(path).is_none()) {
            return Err(config_err(format!("no adapter binding for {path}")));
        }
        let events = match &self.event_log {
            None => EventLog::in_memory(),
            Some(p) => EventLog::open(&self.resolve(p))?,
        };
        Ok(ControllerParts {
            context,
            registry,
            bindings,
            backend: self.backend.clone(),
            mode: self.mode,
            policy: self.policy,
            events,
        })
    }
}
