//! Per-task costs, weighted optimizer utility and the evaluation budget.
//!
//! Internally everything is a *cost* (lower is better): the mean optimality
//! gap for TSP tasks, the mean excess over the lower bound for bin packing.
//! Utility is the negated cost.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harnesses::{EvalOutcome, GlsParams, RuleKind};
use crate::instances::{bpp_lower_bound, Dataset, ProblemKind};

/// Cost assigned to any heuristic with a failed evaluation.
pub const WORST_COST: f64 = 10.0;

/// Successful evaluations are capped here so they always beat a failure.
pub const MAX_OK_COST: f64 = 9.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TaskKind {
    ConstructiveTsp,
    GlsTsp,
    KglsTsp,
    OnlineBpp,
}

impl TaskKind {
    pub fn rule_kind(self) -> RuleKind {
        match self {
            TaskKind::ConstructiveTsp => RuleKind::NextNode,
            TaskKind::GlsTsp => RuleKind::EdgePenaltyUpdate,
            TaskKind::KglsTsp => RuleKind::EdgeIndicator,
            TaskKind::OnlineBpp => RuleKind::BinScore,
        }
    }

    pub fn problem(self) -> ProblemKind {
        match self {
            TaskKind::OnlineBpp => ProblemKind::Bpp,
            _ => ProblemKind::Tsp,
        }
    }
}

/// Engine settings that travel with a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessParams {
    pub gls: GlsParams,
    /// Wall-clock seconds allowed per instance evaluation.
    pub instance_timeout: f64,
}

impl Default for HarnessParams {
    fn default() -> Self {
        Self { gls: GlsParams::default(), instance_timeout: 60.0 }
    }
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub task_id: String,
    pub kind: TaskKind,
    pub size: usize,
    pub dataset: Arc<Dataset>,
    pub weight: f64,
    pub harness: HarnessParams,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("task {0}: dataset kind does not match task kind")]
    KindMismatch(String),
    #[error("task {0}: weight must be finite and positive")]
    BadWeight(String),
    #[error("task {0}: dataset has no reference objectives")]
    MissingReferences(String),
    #[error("task {task}: {got} outcomes for {want} instances")]
    OutcomeCount { task: String, got: usize, want: usize },
    #[error("no cost for task {0}")]
    MissingTask(String),
}

impl TaskSpec {
    pub fn new(
        task_id: impl Into<String>,
        kind: TaskKind,
        dataset: Arc<Dataset>,
        weight: f64,
        harness: HarnessParams,
    ) -> Result<Self, ScoringError> {
        let task_id = task_id.into();
        if dataset.kind() != kind.problem() {
            return Err(ScoringError::KindMismatch(task_id));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(ScoringError::BadWeight(task_id));
        }
        if kind.problem() == ProblemKind::Tsp && dataset.references().is_none() {
            return Err(ScoringError::MissingReferences(task_id));
        }
        let size = match dataset.tsp() {
            Some(v) => v.first().map_or(0, |t| t.n()),
            None => dataset.bpp().and_then(|v| v.first()).map_or(0, |b| b.weights().len()),
        };
        Ok(Self { task_id, kind, size, dataset, weight, harness })
    }
}

/// Mean relative gap over the task's instances, or [`WORST_COST`] if any
/// evaluation failed. Successful costs are clamped to [`MAX_OK_COST`].
pub fn task_cost(outcomes: &[EvalOutcome], task: &TaskSpec) -> Result<f64, ScoringError> {
    let ds = &task.dataset;
    if outcomes.len() != ds.len() {
        return Err(ScoringError::OutcomeCount { task: task.task_id.clone(), got: outcomes.len(), want: ds.len() });
    }
    let refs: Vec<f64> = match ds.bpp() {
        Some(bins) => bins.iter().map(|b| bpp_lower_bound(b) as f64).collect(),
        None => ds.references().ok_or_else(|| ScoringError::MissingReferences(task.task_id.clone()))?.to_vec(),
    };
    let mut total = 0.0;
    for (o, r) in outcomes.iter().zip(&refs) {
        match o.objective() {
            Some(v) if v.is_finite() => total += (v - r) / r,
            _ => return Ok(WORST_COST),
        }
    }
    let cost = total / outcomes.len().max(1) as f64;
    Ok(if cost.is_nan() { WORST_COST } else { cost.min(MAX_OK_COST) })
}

/// `sum_i w_i * (-cost_i)`; higher is better.
pub fn aggregate_optimizer_utility(
    costs: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<f64, ScoringError> {
    weights.iter().try_fold(0.0, |acc, (task, w)| {
        let c = costs.get(task).ok_or_else(|| ScoringError::MissingTask(task.clone()))?;
        Ok(acc + w * -c)
    })
}

pub fn uniform_weights<'a>(task_ids: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, f64> {
    let ids: Vec<&str> = task_ids.into_iter().collect();
    let w = 1.0 / ids.len().max(1) as f64;
    ids.into_iter().map(|t| (t.to_string(), w)).collect()
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("evaluation budget exhausted: {used}/{limit} used, {requested} requested")]
pub struct BudgetExhausted {
    pub limit: u64,
    pub used: u64,
    pub requested: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSnapshot {
    pub limit: u64,
    pub used: u64,
    pub per_task: BTreeMap<String, u64>,
}

/// Global heuristic-evaluation counter with a hard ceiling. A charge that
/// would exceed the limit is refused entirely.
#[derive(Debug)]
pub struct BudgetLedger {
    limit: u64,
    used: AtomicU64,
    per_task: Mutex<BTreeMap<String, u64>>,
}

impl BudgetLedger {
    pub fn new(limit: u64) -> Self {
        Self { limit, used: AtomicU64::new(0), per_task: Mutex::new(BTreeMap::new()) }
    }

    pub fn from_snapshot(s: &BudgetSnapshot) -> Self {
        Self { limit: s.limit, used: AtomicU64::new(s.used.min(s.limit)), per_task: Mutex::new(s.per_task.clone()) }
    }

    pub fn charge(&self, task: &str, n: u64) -> Result<(), BudgetExhausted> {
        if n == 0 {
            return Ok(());
        }
        self.used
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| u.checked_add(n).filter(|&t| t <= self.limit))
            .map_err(|used| BudgetExhausted { limit: self.limit, used, requested: n })?;
        *self.per_task.lock().expect("ledger lock").entry(task.to_string()).or_default() += n;
        Ok(())
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Acquire)
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.used()
    }

    pub fn is_exhausted(&self) -> bool {
        self.used() >= self.limit
    }

    pub fn snapshot(&self) -> BudgetSnapshot {
        let per_task = self.per_task.lock().expect("ledger lock").clone();
        BudgetSnapshot { limit: self.limit, used: self.used(), per_task }
    }
}
