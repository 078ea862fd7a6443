//! Append-only event log, one JSON document per line, and state replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, TimeDelta, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Proposal, ProposalStatus, ServiceError};
use crate::context::HomeContext;
use crate::response::Change;
use crate::simulator::fold_changes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CommandReceived,
    CompletionReceived,
    ProposalCreated,
    ProposalApplied,
    ProposalRejected,
    ValidationViolation,
    AdapterError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: Value,
}

struct Inner {
    file: Option<File>,
    records: Vec<EventRecord>,
}

/// Writes are flushed per record. Timestamps strictly increase within a log.
pub struct EventLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl EventLog {
    /// Opens (or creates) a log file, loading any existing records.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let records = read_events(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_owned()),
            inner: Mutex::new(Inner {
                file: Some(file),
                records,
            }),
        })
    }

    /// A log kept only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                file: None,
                records: Vec::new(),
            }),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, kind: EventKind, payload: Value) -> Result<EventRecord, ServiceError> {
        let mut inner = self.inner.lock().unwrap();
        let (seq, floor) = match inner.records.last() {
            Some(last) => (last.seq + 1, Some(last.timestamp)),
            None => (1, None),
        };
        let mut timestamp = Utc::now();
        if let Some(prev) = floor {
            if timestamp <= prev {
                timestamp = prev + TimeDelta::microseconds(1);
            }
        }
        let record = EventRecord {
            seq,
            timestamp,
            kind,
            payload,
        };
        if let Some(file) = inner.file.as_mut() {
            let line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        inner.records.push(record.clone());
        Ok(record)
    }

    pub fn since(&self, seq: u64) -> Vec<EventRecord> {
        let inner = self.inner.lock().unwrap();
        inner.records.iter().filter(|r| r.seq > seq).cloned().collect()
    }

    pub fn all(&self) -> Vec<EventRecord> {
        self.since(0)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, ServiceError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Replay(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub state: HomeContext,
    /// In creation order.
    pub proposals: IndexMap<String, Proposal>,
}

fn field<'a>(record: &'a EventRecord, key: &str) -> Result<&'a Value, ServiceError> {
    record
        .payload
        .get(key)
        .ok_or_else(|| ServiceError::Replay(format!("event {} lacks {key:?}", record.seq)))
}

fn proposal_id(record: &EventRecord) -> Result<String, ServiceError> {
    field(record, "proposal_id")?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| ServiceError::Replay(format!("event {}: proposal_id is not a string", record.seq)))
}

/// Folds an event log over the initial context, reconstructing the final
/// state and every proposal's status.
pub fn replay(initial: &HomeContext, events: &[EventRecord]) -> Result<Replayed, ServiceError> {
    let mut state = initial.clone();
    let mut proposals: IndexMap<String, Proposal> = IndexMap::new();
    for record in events {
        match record.kind {
            EventKind::ProposalCreated => {
                let p: Proposal = serde_json::from_value(field(record, "proposal")?.clone())
                    .map_err(|e| ServiceError::Replay(format!("event {}: {e}", record.seq)))?;
                proposals.insert(p.id.clone(), p);
            }
            EventKind::ProposalApplied => {
                let id = proposal_id(record)?;
                let changes: Vec<Change> = serde_json::from_value(field(record, "changes")?.clone())
                    .map_err(|e| ServiceError::Replay(format!("event {}: {e}", record.seq)))?;
                state = fold_changes(&state, &changes)
                    .map_err(|e| ServiceError::Replay(format!("event {}: {e}", record.seq)))?;
                let p = proposals
                    .get_mut(&id)
                    .ok_or_else(|| ServiceError::Replay(format!("event {}: unknown proposal {id}", record.seq)))?;
                if p.status == ProposalStatus::Pending {
                    p.status = ProposalStatus::Applied;
                }
            }
            EventKind::ProposalRejected | EventKind::AdapterError => {
                let Ok(id) = proposal_id(record) else { continue };
                if let Some(p) = proposals.get_mut(&id) {
                    p.status = if record.kind == EventKind::ProposalRejected {
                        ProposalStatus::Rejected
                    } else {
                        ProposalStatus::Failed
                    };
                    if let Some(err) = record.payload.get("message").and_then(Value::as_str) {
                        p.error = Some(err.to_owned());
                    }
                }
            }
            EventKind::CommandReceived | EventKind::CompletionReceived | EventKind::ValidationViolation => {}
        }
    }
    Ok(Replayed { state, proposals })
}
