//! Optimizer programs: the host interface they see and the built-in ones.
//!
//! An optimizer receives a read-only view of one population, a `utility`
//! callback that evaluates candidate code, and a language model. It returns
//! the best (idea, code, cost) it found. Generated optimizers run in a
//! worker process and reach the same interface over RPC; shipped optimizers
//! run natively.

mod native;
pub mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harnesses::rules::normalize_source;

pub use native::{Elitist, Passthrough, SeedOptimizer};

/// Population member as seen by optimizer code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionView {
    pub best_sol: String,
    pub idea: String,
    pub utility: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum CallbackError {
    #[error("evaluation budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("candidate limit reached: {0}")]
    CandidateLimit(String),
    #[error("callback budget exceeded: {0}")]
    CallbackBudget(String),
    #[error("population: {0}")]
    Population(String),
    #[error("language model: {0}")]
    Llm(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("interrupted: {0}")]
    Interrupted(String),
}

impl CallbackError {
    /// Errors after which the run is abandoned regardless of what the code does.
    pub fn is_fatal(&self) -> bool {
        matches!(self, CallbackError::CallbackBudget(_) | CallbackError::Protocol(_) | CallbackError::Interrupted(_))
    }
}

/// Everything an optimizer may call.
pub trait OptimizerHost: Sync {
    fn get_solution_by_index(&self, subtask: &str, index: usize) -> Result<SolutionView, CallbackError>;
    fn get_random_solution(&self, subtask: &str) -> Result<SolutionView, CallbackError>;
    fn get_subtask_size(&self, subtask: &str) -> Result<usize, CallbackError>;
    /// Cost of `code` on `subtask` (lower is better).
    fn utility(&self, code: &str, idea: &str, subtask: &str) -> Result<f64, CallbackError>;
    fn prompt(&self, expertise: &str, message: &str, temperature: f64) -> Result<String, CallbackError>;
    fn prompt_batch(&self, expertise: &str, messages: &[String], temperature: f64) -> Result<Vec<String>, CallbackError>;
    /// Maximum number of `utility` calls the run may make.
    fn candidate_limit(&self) -> usize {
        usize::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub idea: String,
    pub code: String,
    pub cost: f64,
}

pub trait NativeOptimizer: Sync {
    fn optimize(&self, host: &dyn OptimizerHost, subtask_prompt: &str, subtask: &str) -> Result<OptimizerResult, CallbackError>;
}

pub struct NativeOptimizerSpec {
    pub name: &'static str,
    pub idea: &'static str,
    pub source: &'static str,
    pub imp: &'static dyn NativeOptimizer,
}

static REGISTRY: &[NativeOptimizerSpec] = &[
    NativeOptimizerSpec {
        name: "seed",
        idea: "Pick a random heuristic, ask for several alternative directions, implement one candidate per direction and keep the cheapest.",
        source: include_str!("../../assets/optimizers/seed.py"),
        imp: &SeedOptimizer,
    },
    NativeOptimizerSpec {
        name: "elitist",
        idea: "Refine the current best heuristic along several suggested directions at a moderate temperature and keep the cheapest result.",
        source: include_str!("../../assets/optimizers/elitist.py"),
        imp: &Elitist,
    },
    NativeOptimizerSpec {
        name: "passthrough",
        idea: "Return the current best member unchanged.",
        source: include_str!("../../assets/optimizers/passthrough.py"),
        imp: &Passthrough,
    },
];

pub fn native_optimizers() -> &'static [NativeOptimizerSpec] {
    REGISTRY
}

pub fn find_native_optimizer(name: &str) -> Option<&'static NativeOptimizerSpec> {
    REGISTRY.iter().find(|s| s.name == name)
}

pub fn seed_optimizer() -> &'static NativeOptimizerSpec {
    find_native_optimizer("seed").expect("registered")
}

/// Binds code to a built-in optimizer: `native:<name>` or a normalized source match.
pub fn resolve_optimizer(code: &str) -> Option<&'static NativeOptimizerSpec> {
    if let Some(name) = code.trim().strip_prefix("native:") {
        return find_native_optimizer(name.trim());
    }
    let norm = normalize_source(code);
    REGISTRY.iter().find(|s| normalize_source(s.source) == norm)
}
