use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::UsageCounters;
use crate::population::{Individual, Population, PopulationSnapshot};
use crate::scoring::BudgetSnapshot;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const BEST_FILE: &str = "best_heuristics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    BudgetExhausted,
    Interrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Train,
    Infer,
}

impl Phase {
    pub(crate) fn tag(self) -> u64 {
        match self {
            Phase::Init => 1,
            Phase::Train => 2,
            Phase::Infer => 3,
        }
    }
}

/// One charged heuristic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub phase: Phase,
    pub iteration: u32,
    pub task: String,
    pub code_id: String,
    pub cost: f64,
}

/// One line of `metrics.jsonl`. Holds no wall-clock values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u32,
    pub meta_id: String,
    pub meta_cost: f64,
    pub task_best: BTreeMap<String, f64>,
    pub optimizer_pop_size: usize,
    pub candidates_evaluated: usize,
    pub evals_used: u64,
    pub llm_requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
}

/// One line of `timings.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub iteration: u32,
    pub elapsed_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunState {
    /// Last completed (or interrupted) iteration; 0 after initialization.
    pub iteration: u32,
    pub meta_optimizer: Individual,
    pub optimizer_pop: Population,
    pub heuristic_pops: BTreeMap<String, Population>,
    pub metrics: Vec<MetricsRecord>,
    pub stop_reason: Option<StopReason>,
    pub seed_evaluated: bool,
}

impl RunState {
    pub fn best_heuristics(&self) -> BTreeMap<String, Individual> {
        self.heuristic_pops.iter().filter_map(|(t, p)| p.best().map(|b| (t.clone(), b.clone()))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub iteration: u32,
    pub meta_optimizer: Individual,
    pub optimizer_pop: PopulationSnapshot,
    pub heuristic_pops: BTreeMap<String, PopulationSnapshot>,
    pub metrics: Vec<MetricsRecord>,
    pub stop_reason: Option<StopReason>,
    pub seed_evaluated: bool,
    pub budget: BudgetSnapshot,
    pub transcript_cursor: BTreeMap<String, usize>,
    pub usage: UsageCounters,
    pub audit_seq: u64,
}

impl Checkpoint {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(CHECKPOINT_FILE)
    }

    pub fn state(&self) -> RunState {
        RunState {
            iteration: self.iteration,
            meta_optimizer: self.meta_optimizer.clone(),
            optimizer_pop: Population::from_snapshot(self.optimizer_pop.clone()),
            heuristic_pops: self.heuristic_pops.iter().map(|(k, v)| (k.clone(), Population::from_snapshot(v.clone()))).collect(),
            metrics: self.metrics.clone(),
            stop_reason: self.stop_reason,
            seed_evaluated: self.seed_evaluated,
        }
    }

    /// Written to a temporary file and renamed, so a crash never leaves a
    /// half-written checkpoint.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?)?;
        fs::rename(tmp, Self::path(dir))
    }

    pub fn load(dir: &Path) -> Result<Self, String> {
        let p = Self::path(dir);
        let bytes = fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", p.display()))
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}
