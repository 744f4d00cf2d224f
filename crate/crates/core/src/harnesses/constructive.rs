use std::time::Instant;

use super::{tour_length, Deadline, EvalOutcome, HarnessError, NextNodeRule, RuleError};
use crate::instances::{distance_matrix, TspInstance};
use crate::matrix::SquareMatrix;

/// Builds a tour from `start`, asking `rule` for each next city. The
/// destination passed to the rule is always `start`.
pub fn construct_tour(
    dist: &SquareMatrix,
    rule: &dyn NextNodeRule,
    start: usize,
    deadline: Deadline,
) -> Result<Vec<usize>, HarnessError> {
    let n = dist.n();
    if start >= n {
        return Err(RuleError::new(format!("start node {start} out of range for {n} cities")).into());
    }
    let mut unvisited: Vec<usize> = (0..n).filter(|&c| c != start).collect();
    let mut order = Vec::with_capacity(n);
    order.push(start);
    let mut current = start;
    while !unvisited.is_empty() {
        deadline.check()?;
        let next = rule.select_next_node(current, start, &unvisited, dist)?;
        let idx = unvisited
            .binary_search(&next)
            .map_err(|_| RuleError::new(format!("select_next_node returned {next}, which is not an unvisited node")))?;
        unvisited.remove(idx);
        order.push(next);
        current = next;
    }
    Ok(order)
}

pub fn run_constructive(inst: &TspInstance, rule: &dyn NextNodeRule, start: usize, deadline: Deadline) -> EvalOutcome {
    let started = Instant::now();
    let dist = distance_matrix(inst);
    let result = construct_tour(&dist, rule, start, deadline).map(|order| tour_length(&order, &dist));
    EvalOutcome::from_result(result, started)
}
