//! The long-running controller: command → prompt → completion → change
//! set → (auto-apply | pending review), with every step event-logged.

mod config;
pub mod events;
mod http;

use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::context::HomeContext;
use crate::gateway::{BackendConfig, BackendKind, Gateway, GatewayError};
use crate::prompt::{build_prompt, Command, PromptError};
use crate::response::{process_completion, ChangeSet, ProposalShape, ValidationPolicy};
use crate::schema::SchemaRegistry;
use crate::simulator::{Bindings, HomeSimulator, SimulatorError};

pub use config::{ServiceConfig, ServiceMode};
pub use events::{replay, EventKind, EventLog, EventRecord, Replayed};
pub use http::router;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("command text is empty")]
    EmptyCommand,
    #[error("backend error: {source}")]
    Backend {
        source: GatewayError,
        proposal: Box<Proposal>,
    },
    #[error("proposal {0} not found")]
    NotFound(String),
    #[error("proposal {id} is {status:?}, not pending")]
    NotPending { id: String, status: ProposalStatus },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("event log replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<PromptError> for ServiceError {
    fn from(_: PromptError) -> Self {
        ServiceError::EmptyCommand
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Applied,
    Rejected,
    Failed,
    AutoApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub command: Command,
    pub changeset: ChangeSet,
    /// Completion round trip, seconds.
    pub latency: f64,
    pub status: ProposalStatus,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ProposalShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

/// Everything a controller needs, independent of where it came from.
pub struct ControllerParts {
    pub context: HomeContext,
    pub registry: SchemaRegistry,
    pub bindings: Bindings,
    pub backend: BackendConfig,
    pub mode: ServiceMode,
    pub policy: ValidationPolicy,
    pub events: EventLog,
}

pub struct Controller {
    initial: HomeContext,
    registry: SchemaRegistry,
    gateway: Gateway,
    simulator: HomeSimulator,
    mode: ServiceMode,
    policy: ValidationPolicy,
    events: EventLog,
    proposals: RwLock<IndexMap<String, Proposal>>,
    /// Completions are obtained one at a time, FIFO.
    completion_queue: tokio::sync::Mutex<()>,
    resolving: tokio::sync::Mutex<()>,
}

impl Controller {
    /// Builds a controller. A non-empty event log is replayed first, so a
    /// restarted service resumes with the same state and proposals.
    pub fn new(parts: ControllerParts) -> Result<Self, ServiceError> {
        let gateway = Gateway::new(parts.backend).map_err(|e| ServiceError::Config(e.to_string()))?;
        let Replayed { state, proposals } = replay(&parts.context, &parts.events.all())?;
        Ok(Self {
            simulator: HomeSimulator::new(state, parts.bindings),
            initial: parts.context,
            registry: parts.registry,
            gateway,
            mode: parts.mode,
            policy: parts.policy,
            events: parts.events,
            proposals: RwLock::new(proposals),
            completion_queue: tokio::sync::Mutex::new(()),
            resolving: tokio::sync::Mutex::new(()),
        })
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        Self::new(cfg.load_parts()?)
    }

    pub fn mode(&self) -> ServiceMode {
        self.mode
    }

    pub fn simulator(&self) -> &HomeSimulator {
        &self.simulator
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    /// The context the service started from, before any logged changes.
    pub fn initial_context(&self) -> &HomeContext {
        &self.initial
    }

    pub fn get_state(&self) -> Arc<HomeContext> {
        self.simulator.snapshot()
    }

    /// Newest first.
    pub fn get_history(&self, limit: usize) -> Vec<Proposal> {
        let proposals = self.proposals.read().unwrap();
        proposals.values().rev().take(limit).cloned().collect()
    }

    pub fn get_proposal(&self, id: &str) -> Option<Proposal> {
        self.proposals.read().unwrap().get(id).cloned()
    }

    fn store(&self, p: &Proposal) {
        self.proposals.write().unwrap().insert(p.id.clone(), p.clone());
    }

    fn log(&self, kind: EventKind, payload: serde_json::Value) -> Result<(), ServiceError> {
        self.events.append(kind, payload).map(|_| ())
    }

    pub async fn handle_command(&self, text: &str) -> Result<Proposal, ServiceError> {
        let command = Command::new(text)?;
        let _turn = self.completion_queue.lock().await;
        self.log(
            EventKind::CommandReceived,
            json!({ "text": command.text, "issued_at": command.issued_at }),
        )?;

        let current = self.simulator.snapshot();
        let prompt = build_prompt(&current, &command)?;
        let mut proposal = Proposal {
            id: uuid::Uuid::new_v4().to_string(),
            command,
            changeset: ChangeSet::default(),
            latency: 0.0,
            status: ProposalStatus::Failed,
            created_at: Utc::now(),
            shape: None,
            error: None,
        };

        let completion = match self.gateway.complete(&prompt).await {
            Ok(c) => c,
            Err(e) => {
                proposal.error = Some(format!("{}: {e}", e.class()));
                self.log(EventKind::ProposalCreated, json!({ "proposal": proposal }))?;
                self.store(&proposal);
                return Err(ServiceError::Backend {
                    source: e,
                    proposal: Box::new(proposal),
                });
            }
        };
        proposal.latency = completion.latency;
        let cfg = self.gateway.config();
        self.log(
            EventKind::CompletionReceived,
            json!({
                "proposal_id": proposal.id,
                "backend": completion.backend_kind,
                "model": (cfg.kind == BackendKind::Remote).then_some(&cfg.model_name),
                "latency": completion.latency,
                "text": completion.text,
            }),
        )?;

        match process_completion(&completion.text, &current, &self.registry, self.policy) {
            Err(e) => {
                proposal.error = Some(format!("{}: {e}", e.class()));
                self.log(EventKind::ProposalCreated, json!({ "proposal": proposal }))?;
                self.store(&proposal);
                return Ok(proposal);
            }
            Ok((shape, changeset)) => {
                proposal.shape = Some(shape);
                proposal.changeset = changeset;
            }
        }
        for v in &proposal.changeset.dropped {
            self.log(
                EventKind::ValidationViolation,
                json!({ "proposal_id": proposal.id, "violation": v }),
            )?;
        }

        match self.mode {
            ServiceMode::Review => {
                proposal.status = ProposalStatus::Pending;
                self.log(EventKind::ProposalCreated, json!({ "proposal": proposal }))?;
            }
            ServiceMode::Auto => match self.simulator.apply_changeset(&proposal.changeset).await {
                Ok(outcome) => {
                    proposal.status = ProposalStatus::AutoApplied;
                    self.log(EventKind::ProposalCreated, json!({ "proposal": proposal }))?;
                    self.log_applied(&proposal, &outcome.wire)?;
                }
                Err(e) => {
                    proposal.error = Some(format!("{}: {e}", e.class()));
                    self.log(EventKind::ProposalCreated, json!({ "proposal": proposal }))?;
                    self.log_adapter_error(&proposal, &e)?;
                }
            },
        }
        self.store(&proposal);
        Ok(proposal)
    }

    fn log_applied(&self, p: &Proposal, wire: &[crate::simulator::WireCommand]) -> Result<(), ServiceError> {
        self.log(
            EventKind::ProposalApplied,
            json!({ "proposal_id": p.id, "changes": p.changeset.changes, "wire": wire }),
        )
    }

    fn log_adapter_error(&self, p: &Proposal, e: &SimulatorError) -> Result<(), ServiceError> {
        self.log(
            EventKind::AdapterError,
            json!({ "proposal_id": p.id, "class": e.class(), "message": format!("{}: {e}", e.class()) }),
        )
    }

    pub async fn resolve_proposal(&self, id: &str, decision: Decision) -> Result<Proposal, ServiceError> {
        let _one_at_a_time = self.resolving.lock().await;
        let mut proposal = self
            .get_proposal(id)
            .ok_or_else(|| ServiceError::NotFound(id.to_owned()))?;
        if proposal.status != ProposalStatus::Pending {
            return Err(ServiceError::NotPending {
                id: id.to_owned(),
                status: proposal.status,
            });
        }
        match decision {
            Decision::Reject => {
                proposal.status = ProposalStatus::Rejected;
                self.log(EventKind::ProposalRejected, json!({ "proposal_id": proposal.id }))?;
            }
            Decision::Approve => match self.simulator.apply_changeset(&proposal.changeset).await {
                Ok(outcome) => {
                    proposal.status = ProposalStatus::Applied;
                    self.log_applied(&proposal, &outcome.wire)?;
                }
                Err(e) => {
                    proposal.status = ProposalStatus::Failed;
                    proposal.error = Some(format!("{}: {e}", e.class()));
                    self.log_adapter_error(&proposal, &e)?;
                }
            },
        }
        self.store(&proposal);
        Ok(proposal)
    }
}
