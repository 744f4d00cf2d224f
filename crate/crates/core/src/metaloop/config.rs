use serde::{Deserialize, Serialize};

use crate::population::DEFAULT_CAPACITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaLoopConfig {
    /// Outer iterations (T).
    pub iterations: u32,
    /// Candidate optimizers evaluated per outer iteration (M).
    pub candidates: usize,
    /// Heuristic evaluations per optimizer run per task (K).
    pub heuristics_per_task: usize,
    /// Ask for natural-language directions before requesting seed code.
    pub idea_generation_enabled: bool,
    pub seed: u64,
    pub heuristic_capacity: usize,
    pub optimizer_capacity: usize,
    /// Off for dry runs: the seed optimizer keeps the sentinel cost.
    pub evaluate_seed_optimizer: bool,
    /// Rounds of heuristic design per inference task.
    pub inference_iterations: u32,
    pub temperature: f64,
}

impl Default for MetaLoopConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            candidates: 5,
            heuristics_per_task: 5,
            idea_generation_enabled: true,
            seed: 0,
            heuristic_capacity: DEFAULT_CAPACITY,
            optimizer_capacity: DEFAULT_CAPACITY,
            evaluate_seed_optimizer: true,
            inference_iterations: 10,
            temperature: 1.0,
        }
    }
}

impl MetaLoopConfig {
    /// Checks the loop shape against the task count and evaluation budget.
    pub fn validate(&self, num_tasks: usize, budget_limit: u64) -> Result<(), String> {
        if self.iterations == 0 || self.candidates == 0 || self.heuristics_per_task == 0 {
            return Err("iterations, candidates and heuristics_per_task must be at least 1".into());
        }
        if self.heuristic_capacity == 0 || self.optimizer_capacity == 0 {
            return Err("population capacities must be at least 1".into());
        }
        if num_tasks == 0 {
            return Err("at least one task is required".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        let expected = self.iterations as u128 * self.candidates as u128 * self.heuristics_per_task as u128 * num_tasks as u128;
        if expected > budget_limit as u128 {
            return Err(format!(
                "iterations x candidates x heuristics_per_task x tasks = {expected} exceeds the evaluation budget {budget_limit}"
            ));
        }
        Ok(())
    }
}
