//! Convergence series of a training run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::metaloop::{read_jsonl, MetricsRecord, TimingRecord, METRICS_FILE, TIMINGS_FILE};

/// Row label of the meta-optimizer's own cost.
pub const OPTIMIZER_ROW: &str = "@optimizer";

pub const CSV_HEADER: &str = "task,iteration,best_cost,evals_used,elapsed_s";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub task: String,
    pub iteration: u32,
    pub best_cost: f64,
    pub evals_used: u64,
    /// Cumulative wall-clock seconds across sessions.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub iterations: u32,
    pub rows: Vec<SeriesRow>,
}

/// One row per task and recorded iteration. An iteration recorded twice (a
/// stop followed by a resume) keeps its last record.
pub fn build_report(run_dir: &Path, seed: u64) -> Result<Report, String> {
    let metrics_path = run_dir.join(METRICS_FILE);
    if !metrics_path.exists() {
        return Err(format!("{} has no {METRICS_FILE}; is it a training run directory?", run_dir.display()));
    }
    let metrics: Vec<MetricsRecord> = read_jsonl(&metrics_path)?;
    if metrics.is_empty() {
        return Err(format!("{} is empty", metrics_path.display()));
    }
    let timings_path = run_dir.join(TIMINGS_FILE);
    let timings: Vec<TimingRecord> = if timings_path.exists() { read_jsonl(&timings_path)? } else { Vec::new() };
    let mut total = 0.0;
    let mut by_iter: BTreeMap<u32, (&MetricsRecord, f64)> = BTreeMap::new();
    for (i, m) in metrics.iter().enumerate() {
        total += timings.get(i).map_or(0.0, |t| t.elapsed_s);
        by_iter.insert(m.iteration, (m, total));
    }
    let mut rows = Vec::new();
    for (&iteration, (m, elapsed_s)) in &by_iter {
        for (task, &best_cost) in &m.task_best {
            rows.push(SeriesRow { task: task.clone(), iteration, best_cost, evals_used: m.evals_used, elapsed_s: *elapsed_s });
        }
        rows.push(SeriesRow {
            task: OPTIMIZER_ROW.into(),
            iteration,
            best_cost: m.meta_cost,
            evals_used: m.evals_used,
            elapsed_s: *elapsed_s,
        });
    }
    let iterations = by_iter.keys().next_back().copied().unwrap_or(0);
    Ok(Report { seed, iterations, rows })
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# seed: {}", self.seed).unwrap();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{:.3}", r.task, r.iteration, r.best_cost, r.evals_used, r.elapsed_s).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}
