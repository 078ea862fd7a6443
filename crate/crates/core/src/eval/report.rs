use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{CommandName, ContextName, EvalError, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub context: ContextName,
    pub command: CommandName,
    /// Mean of every label across all trials and raters.
    pub avg_quality: f64,
    /// Mean trial latency in seconds.
    pub avg_latency: f64,
    pub trials: usize,
    pub raters: usize,
    pub labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub rows: Vec<ReportRow>,
}

pub const COLUMNS: [&str; 4] = ["Context", "Command", "Avg. Quality", "Avg Latency (sec)"];

/// Rows come out grid first (context, then command), then the amended
/// ambiguous commands.
pub fn aggregate(records: &[TrialRecord]) -> Result<ScenarioReport, EvalError> {
    let mut cells: IndexMap<(bool, ContextName, CommandName), Vec<&TrialRecord>> = IndexMap::new();
    for r in records {
        if r.labels.is_empty() {
            return Err(EvalError::UnratedTrials(r.id.clone()));
        }
        cells
            .entry((r.command.is_amended(), r.context, r.command))
            .or_default()
            .push(r);
    }
    cells.sort_keys();
    let rows = cells
        .into_iter()
        .map(|((_, context, command), rs)| {
            let labels: Vec<f64> = rs
                .iter()
                .flat_map(|r| r.labels.iter().map(|l| f64::from(l.label)))
                .collect();
            let raters: BTreeSet<&str> = rs
                .iter()
                .flat_map(|r| r.labels.iter().map(|l| l.rater.as_str()))
                .collect();
            ReportRow {
                context,
                command,
                avg_quality: labels.iter().sum::<f64>() / labels.len() as f64,
                avg_latency: rs.iter().map(|r| r.latency).sum::<f64>() / rs.len() as f64,
                trials: rs.len(),
                raters: raters.len(),
                labels: labels.len(),
            }
        })
        .collect();
    Ok(ScenarioReport { rows })
}

/// Pipe table, one row per cell, values to two decimals.
pub fn render_table(report: &ScenarioReport) -> String {
    let mut out = format!("| {} |\n|{}\n", COLUMNS.join(" | "), "---|".repeat(COLUMNS.len()));
    for row in &report.rows {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.2} |\n",
            row.context, row.command, row.avg_quality, row.avg_latency
        ));
    }
    out
}

/// Comma-separated, full precision.
pub fn render_csv(report: &ScenarioReport) -> String {
    let mut out = format!("{}\n", COLUMNS.join(","));
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.context, row.command, row.avg_quality, row.avg_latency
        ));
    }
    out
}
