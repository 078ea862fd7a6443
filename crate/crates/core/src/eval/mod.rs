//! Trial runner, rating and aggregation over the context × command grid.

mod fixtures;
mod report;
mod store;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Gateway;
use crate::prompt::build_prompt;
use crate::response::{process_completion, ChangeSet, ProposalShape, ValidationPolicy};

pub use fixtures::{
    build_fixture, build_fixture_by_name, default_cells, parse_cells, CommandName, ContextName, Scenario,
};
pub use report::{aggregate, render_csv, render_table, ReportRow, ScenarioReport, COLUMNS};
pub use store::{
    import_review_file, load_records, review_file_path, write_review_file, ReviewEntry, TrialWriter, LABELS_FILE,
    TRIALS_FILE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown fixture name {0:?}")]
    UnknownFixture(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("rater {rater:?} already labeled record {record}")]
    DuplicateRater { rater: String, record: String },
    #[error("label {0} is not 0 or 1")]
    LabelOutOfDomain(f64),
    #[error("{labels} labels given for {records} records")]
    LabelCountMismatch { labels: usize, records: usize },
    #[error("record {0} has no labels")]
    UnratedTrials(String),
    #[error("unknown record id {0:?}")]
    UnknownRecord(String),
    #[error("data file {path}: {message}")]
    Data { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterLabel {
    pub rater: String,
    pub label: u8,
}

/// Which pipeline stage failed and how.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialError {
    /// `completion` or `processing`
    pub stage: String,
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: String,
    pub context: ContextName,
    pub command: CommandName,
    pub command_text: String,
    pub trial_index: u32,
    pub raw_response: Option<String>,
    /// Seconds.
    pub latency: f64,
    pub shape: Option<ProposalShape>,
    pub changeset: Option<ChangeSet>,
    pub error: Option<TrialError>,
    #[serde(default)]
    pub labels: Vec<RaterLabel>,
}

pub fn record_id(context: ContextName, command: CommandName, trial: u32) -> String {
    format!("{context:?}-{command:?}-{trial:02}").to_lowercase()
}

/// Runs `trials` trials per cell, one at a time, handing each record to
/// `sink` as soon as it exists. Backend and processing failures are stored
/// in the record.
pub async fn run_matrix<F>(
    cells: &[Scenario],
    trials: u32,
    gateway: &Gateway,
    mut sink: F,
) -> Result<Vec<TrialRecord>, EvalError>
where
    F: FnMut(&TrialRecord) -> std::io::Result<()>,
{
    if trials == 0 {
        return Err(EvalError::NoTrials);
    }
    let mut records = Vec::with_capacity(cells.len() * trials as usize);
    for cell in cells {
        let prompt = build_prompt(&cell.context, &cell.command).expect("fixture commands are non-empty");
        let registry = cell.registry();
        for trial_index in 1..=trials {
            let started = Instant::now();
            let completion = gateway.complete(&prompt).await;
            let mut record = TrialRecord {
                id: record_id(cell.context_name, cell.command_name, trial_index),
                context: cell.context_name,
                command: cell.command_name,
                command_text: cell.command.text.clone(),
                trial_index,
                raw_response: None,
                latency: started.elapsed().as_secs_f64(),
                shape: None,
                changeset: None,
                error: None,
                labels: Vec::new(),
            };
            match completion {
                Ok(c) => {
                    record.latency = c.latency;
                    match process_completion(&c.text, &cell.context, &registry, ValidationPolicy::default()) {
                        Ok((shape, cs)) => {
                            record.shape = Some(shape);
                            record.changeset = Some(cs);
                        }
                        Err(e) => {
                            record.error = Some(TrialError {
                                stage: "processing".into(),
                                class: e.class().into(),
                                message: e.to_string(),
                            })
                        }
                    }
                    record.raw_response = Some(c.text);
                }
                Err(e) => {
                    record.error = Some(TrialError {
                        stage: "completion".into(),
                        class: e.class().into(),
                        message: e.to_string(),
                    })
                }
            }
            sink(&record)?;
            records.push(record);
        }
    }
    Ok(records)
}

/// Adds one label per record from `rater`. Validates everything before
/// touching any record.
pub fn rate_trials(records: &mut [TrialRecord], rater: &str, labels: &[f64]) -> Result<(), EvalError> {
    if labels.len() != records.len() {
        return Err(EvalError::LabelCountMismatch {
            labels: labels.len(),
            records: records.len(),
        });
    }
    let mut checked = Vec::with_capacity(labels.len());
    for (record, &label) in records.iter().zip(labels) {
        let label = if label == 0.0 {
            0u8
        } else if label == 1.0 {
            1u8
        } else {
            return Err(EvalError::LabelOutOfDomain(label));
        };
        if record.labels.iter().any(|l| l.rater == rater) {
            return Err(EvalError::DuplicateRater {
                rater: rater.to_owned(),
                record: record.id.clone(),
            });
        }
        checked.push(label);
    }
    for (record, label) in records.iter_mut().zip(checked) {
        record.labels.push(RaterLabel {
            rater: rater.to_owned(),
            label,
        });
    }
    Ok(())
}
