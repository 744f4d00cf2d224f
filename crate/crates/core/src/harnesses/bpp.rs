use std::time::Instant;

use super::{BinScoreRule, Deadline, EvalOutcome, HarnessError, RuleError};
use crate::instances::BppInstance;

/// Bin index per item and final load per bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packing {
    pub assignment: Vec<usize>,
    pub loads: Vec<u32>,
}

impl Packing {
    pub fn bins_used(&self) -> usize {
        self.loads.len()
    }
}

/// Packs items in arrival order. For each item the rule scores every open
/// bin; the highest-scoring bin with enough room wins (ties to the lowest
/// index). `-inf` marks a bin as never chosen. If no bin qualifies a new bin
/// is opened.
pub fn pack_online(inst: &BppInstance, rule: &dyn BinScoreRule, deadline: Deadline) -> Result<Packing, HarnessError> {
    let cap = inst.capacity();
    let mut remaining: Vec<f64> = Vec::new();
    let mut loads: Vec<u32> = Vec::new();
    let mut assignment = Vec::with_capacity(inst.weights().len());
    for (k, &w) in inst.weights().iter().enumerate() {
        if k % 256 == 0 {
            deadline.check()?;
        }
        let item = w as f64;
        let mut chosen = None;
        if !remaining.is_empty() {
            let scores = rule.score(item, &remaining)?;
            if scores.len() != remaining.len() {
                return Err(RuleError::new(format!(
                    "score returned {} values for {} bins",
                    scores.len(),
                    remaining.len()
                ))
                .into());
            }
            let mut best = f64::NEG_INFINITY;
            for (b, (&s, &r)) in scores.iter().zip(&remaining).enumerate() {
                if s.is_nan() || s == f64::INFINITY {
                    return Err(RuleError::new(format!("score returned non-finite value {s} for bin {b}")).into());
                }
                if r >= item && s > best {
                    best = s;
                    chosen = Some(b);
                }
            }
        }
        let b = match chosen {
            Some(b) => b,
            None => {
                remaining.push(cap as f64);
                loads.push(0);
                remaining.len() - 1
            }
        };
        remaining[b] -= item;
        loads[b] += w;
        assignment.push(b);
    }
    Ok(Packing { assignment, loads })
}

/// Objective is the number of bins used.
pub fn run_online_bpp(inst: &BppInstance, rule: &dyn BinScoreRule, deadline: Deadline) -> EvalOutcome {
    let started = Instant::now();
    let result = pack_online(inst, rule, deadline).map(|p| p.bins_used() as f64);
    EvalOutcome::from_result(result, started)
}
