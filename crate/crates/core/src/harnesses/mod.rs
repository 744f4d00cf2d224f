//! Evaluation engines with pluggable rule hooks.
//!
//! * [`run_constructive`]: builds a tour one city at a time, asking a
//!   next-node rule at every step.
//! * [`run_gls`]: guided local search where an edge-penalty rule rewrites the
//!   working distance matrix once per round.
//! * [`run_kgls`]: knowledge-guided local search where an indicator matrix,
//!   computed once per run, steers which tour edge gets penalized.
//! * [`run_online_bpp`]: online bin packing where a score rule ranks the
//!   open bins for each arriving item.
//!
//! Reported objectives are always recomputed on the true distances.

mod bpp;
mod constructive;
mod gls;
mod kgls;
mod local_search;
pub mod references;
pub mod rules;

use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

use crate::matrix::SquareMatrix;

pub use bpp::{pack_online, run_online_bpp, Packing};
pub use constructive::{construct_tour, run_constructive};
pub use gls::{gls_search, run_gls};
pub use kgls::{kgls_search, run_kgls};
pub use local_search::{local_search, LocalSearch, Neighbors, IMPROVEMENT_EPS, RELOCATE_NEIGHBORS};
pub use rules::{
    BinScoreRule, EdgeIndicatorRule, EdgePenaltyRule, NativeRule, NextNodeRule, RuleError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    NextNode,
    EdgePenaltyUpdate,
    EdgeIndicator,
    BinScore,
}

impl RuleKind {
    /// Function name the generated code must define.
    pub fn entry_symbol(self) -> &'static str {
        match self {
            RuleKind::NextNode => "select_next_node",
            RuleKind::EdgePenaltyUpdate => "update_edge_distance",
            RuleKind::EdgeIndicator => "adaptive_indicators",
            RuleKind::BinScore => "score",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "impl", content = "value", rename_all = "snake_case")]
pub enum RuleImpl {
    /// A built-in rule by registry name.
    Native(String),
    /// Source code executed by a sandbox worker.
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleHook {
    pub kind: RuleKind,
    #[serde(flatten)]
    pub imp: RuleImpl,
}

impl RuleHook {
    pub fn native(kind: RuleKind, name: impl Into<String>) -> Self {
        Self { kind, imp: RuleImpl::Native(name.into()) }
    }

    pub fn external(kind: RuleKind, code: impl Into<String>) -> Self {
        Self { kind, imp: RuleImpl::External(code.into()) }
    }
}

/// A Hamiltonian cycle and its length on the true distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn new(order: Vec<usize>, dist: &SquareMatrix) -> Self {
        let length = tour_length(&order, dist);
        Self { order, length }
    }

    pub fn is_permutation(&self, n: usize) -> bool {
        is_permutation(&self.order, n)
    }
}

pub fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    order.iter().all(|&c| c < n && !std::mem::replace(&mut seen[c], true))
}

/// Cycle length including the closing edge back to the first city.
pub fn tour_length(order: &[usize], dist: &SquareMatrix) -> f64 {
    let n = order.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n - 1 {
        total += dist.get(order[i], order[i + 1]);
    }
    total + dist.get(order[n - 1], order[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EvalStatus {
    Ok { objective: f64 },
    RuleError { message: String },
    Timeout,
}

/// Result of evaluating one rule on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    #[serde(flatten)]
    pub status: EvalStatus,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

impl EvalOutcome {
    pub fn ok(objective: f64, elapsed: f64) -> Self {
        Self { status: EvalStatus::Ok { objective }, elapsed }
    }

    pub fn rule_error(message: impl Into<String>, elapsed: f64) -> Self {
        Self { status: EvalStatus::RuleError { message: message.into() }, elapsed }
    }

    pub fn timeout(elapsed: f64) -> Self {
        Self { status: EvalStatus::Timeout, elapsed }
    }

    pub fn objective(&self) -> Option<f64> {
        match self.status {
            EvalStatus::Ok { objective } => Some(objective),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.status, EvalStatus::Ok { .. })
    }

    pub(crate) fn from_result(result: Result<f64, HarnessError>, started: Instant) -> Self {
        let elapsed = started.elapsed().as_secs_f64();
        match result {
            Ok(v) => Self::ok(v, elapsed),
            Err(HarnessError::Rule(e)) => Self::rule_error(e.0, elapsed),
            Err(HarnessError::Timeout) => Self::timeout(elapsed),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("rule error: {0}")]
    Rule(#[from] RuleError),
    #[error("evaluation exceeded its wall-clock limit")]
    Timeout,
}

/// Optional wall-clock deadline checked between harness steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn none() -> Self {
        Self(None)
    }

    pub fn after(limit: Duration) -> Self {
        Self(Some(Instant::now() + limit))
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        match self.0 {
            Some(t) if Instant::now() >= t => Err(HarnessError::Timeout),
            _ => Ok(()),
        }
    }
}

/// Budgets for the guided local search engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlsParams {
    /// Perturbation rounds, counting the initial descent as round 1.
    pub max_rounds: u32,
    /// Wall-clock seconds per instance; the search stops (with an ok
    /// status) once exceeded.
    pub time_cap: f64,
    /// Penalty weight is `lambda_scale * incumbent_length / n`.
    pub lambda_scale: f64,
    /// Base seed of the per-instance perturbation stream.
    pub seed: u64,
    /// Knowledge-guided search only: follow every penalized descent with a
    /// descent on the true distances.
    pub polish: bool,
    /// Knowledge-guided search only: after this many rounds without a new
    /// incumbent, clear all penalties and restart from a kicked incumbent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_reset: Option<u32>,
}

impl Default for GlsParams {
    fn default() -> Self {
        Self { max_rounds: 1000, time_cap: 10.0, lambda_scale: 0.1, seed: 0, polish: true, penalty_reset: None }
    }
}

impl GlsParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_rounds == 0 {
            return Err("max_rounds must be at least 1".into());
        }
        if !(self.time_cap > 0.0) {
            return Err("time_cap must be positive".into());
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err("lambda_scale must be finite and non-negative".into());
        }
        Ok(())
    }

    pub(crate) fn time_limit(&self) -> Duration {
        Duration::from_secs_f64(self.time_cap)
    }
}

/// Nearest-neighbour tour from `start`, ties to the lowest index.
pub fn nearest_neighbor_tour(dist: &SquareMatrix, start: usize) -> Vec<usize> {
    let n = dist.n();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    visited[start] = true;
    order.push(start);
    for _ in 1..n {
        let row = dist.row(current);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &d) in row.iter().enumerate() {
            if !visited[j] && d < best_d {
                best = j;
                best_d = d;
            }
        }
        visited[best] = true;
        order.push(best);
        current = best;
    }
    order
}
