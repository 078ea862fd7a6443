//! Run directory layout: `trials.jsonl` holds one record per line, written
//! as trials finish; `labels.jsonl` collects rater labels; raters work on
//! `review_<rater>.jsonl` files.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{rate_trials, CommandName, ContextName, EvalError, TrialRecord};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelLine {
    record_id: String,
    rater: String,
    label: u8,
}

/// Appends trial records, flushing after each one.
pub struct TrialWriter {
    file: File,
}

impl TrialWriter {
    /// Starts a fresh run in `dir`, discarding earlier trials and labels.
    pub fn create(dir: &Path) -> Result<Self, EvalError> {
        fs::create_dir_all(dir)?;
        let labels = dir.join(LABELS_FILE);
        if labels.exists() {
            fs::remove_file(labels)?;
        }
        let file = File::create(dir.join(TRIALS_FILE))?;
        Ok(Self { file })
    }

    pub fn append(&mut self, record: &TrialRecord) -> std::io::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        writeln!(self.file, "{line}")?;
        self.file.flush()
    }
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
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
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Data {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}

/// Trial records of a run with all stored labels attached.
pub fn load_records(dir: &Path) -> Result<Vec<TrialRecord>, EvalError> {
    let trials_path = dir.join(TRIALS_FILE);
    if !trials_path.exists() {
        return Err(EvalError::Data {
            path: trials_path.display().to_string(),
            message: "no trials recorded".into(),
        });
    }
    let mut records: Vec<TrialRecord> = read_lines(&trials_path)?;
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    for line in read_lines::<LabelLine>(&dir.join(LABELS_FILE))? {
        let &i = index
            .get(&line.record_id)
            .ok_or_else(|| EvalError::UnknownRecord(line.record_id.clone()))?;
        rate_trials(
            std::slice::from_mut(&mut records[i]),
            &line.rater,
            &[f64::from(line.label)],
        )?;
    }
    Ok(records)
}

/// One line of a review file. Raters fill in `label` with 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub record_id: String,
    pub context: ContextName,
    pub command: CommandName,
    pub command_text: String,
    pub raw_response: Option<String>,
    pub proposed_changes: Vec<String>,
    pub dropped: Vec<String>,
    pub error: Option<String>,
    pub label: Option<f64>,
}

impl ReviewEntry {
    fn from_record(r: &TrialRecord) -> Self {
        let (proposed_changes, dropped) = match &r.changeset {
            Some(cs) => (
                cs.changes
                    .iter()
                    .map(|c| format!("{}.{}: {} -> {}", c.device_path(), c.property, c.old, c.new))
                    .collect(),
                cs.dropped
                    .iter()
                    .map(|v| format!("{} ({}): {}", v.path, v.kind, v.detail))
                    .collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        Self {
            record_id: r.id.clone(),
            context: r.context,
            command: r.command,
            command_text: r.command_text.clone(),
            raw_response: r.raw_response.clone(),
            proposed_changes,
            dropped,
            error: r.error.as_ref().map(|e| format!("{}: {}", e.class, e.message)),
            label: None,
        }
    }
}

fn check_rater_id(rater: &str) -> Result<(), EvalError> {
    if rater.is_empty() || !rater.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(EvalError::Data {
            path: rater.to_owned(),
            message: "rater ids may only contain letters, digits, '-' and '_'".into(),
        });
    }
    Ok(())
}

pub fn review_file_path(dir: &Path, rater: &str) -> PathBuf {
    dir.join(format!("review_{rater}.jsonl"))
}

/// Writes a blank review file for `rater` covering every record.
pub fn write_review_file(dir: &Path, rater: &str, records: &[TrialRecord]) -> Result<PathBuf, EvalError> {
    check_rater_id(rater)?;
    let path = review_file_path(dir, rater);
    let mut out = File::create(&path)?;
    for r in records {
        let line = serde_json::to_string(&ReviewEntry::from_record(r)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(path)
}

/// Reads a completed review file and stores its labels under `rater`.
/// Every record of the run must carry exactly one label; nothing is stored
/// unless the whole file is valid. Returns the number of labels stored.
pub fn import_review_file(dir: &Path, rater: &str, review: &Path) -> Result<usize, EvalError> {
    check_rater_id(rater)?;
    let mut records = load_records(dir)?;
    let entries: Vec<ReviewEntry> = read_lines(review)?;
    let mut by_id: HashMap<&str, f64> = HashMap::new();
    for e in &entries {
        let label = e.label.ok_or_else(|| EvalError::Data {
            path: review.display().to_string(),
            message: format!("record {} has no label", e.record_id),
        })?;
        if by_id.insert(&e.record_id, label).is_some() {
            return Err(EvalError::Data {
                path: review.display().to_string(),
                message: format!("record {} labeled twice", e.record_id),
            });
        }
    }
    let labels = records
        .iter()
        .map(|r| {
            by_id
                .remove(r.id.as_str())
                .ok_or_else(|| EvalError::UnratedTrials(r.id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = by_id.keys().next() {
        return Err(EvalError::UnknownRecord((*extra).to_owned()));
    }
    rate_trials(&mut records, rater, &labels)?;

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(LABELS_FILE))?;
    for r in &records {
        let label = r.labels.last().expect("just rated").label;
        let line = serde_json::to_string(&LabelLine {
            record_id: r.id.clone(),
            rater: rater.to_owned(),
            label,
        })
        .map_err(std::io::Error::other)?;
        writeln!(file, "{line}")?;
    }
    file.flush()?;
    Ok(records.len())
}
