use std::time::Instant;

use super::local_search::{TourState, RELOCATE_NEIGHBORS};
use super::{
    nearest_neighbor_tour, tour_length, EdgePenaltyRule, EvalOutcome, GlsParams, HarnessError, LocalSearch,
    Neighbors, RuleError, Tour,
};
use crate::instances::{distance_matrix, TspInstance};
use crate::matrix::SquareMatrix;
use crate::rng::SplitMix64;

/// Best tour of a guided search plus the incumbent length after each round.
#[derive(Debug, Clone)]
pub struct SearchReport {
    pub best: Tour,
    pub trace: Vec<f64>,
}

pub(crate) fn add_tour_edges(used: &mut SquareMatrix, order: &[usize]) {
    let n = order.len();
    for i in 0..n {
        let (a, b) = (order[i], order[(i + 1) % n]);
        used.add(a, b, 1.0);
        used.add(b, a, 1.0);
    }
}

/// Double-bridge kick. Returns the new order and the cities next to the cuts.
pub(crate) fn double_bridge(order: &[usize], rng: &mut SplitMix64) -> (Vec<usize>, Vec<usize>) {
    let n = order.len();
    if n < 5 {
        return (order.to_vec(), Vec::new());
    }
    let mut cuts = [0usize; 3];
    loop {
        for c in cuts.iter_mut() {
            *c = 1 + rng.below(n as u64 - 1) as usize;
        }
        cuts.sort_unstable();
        if cuts[0] < cuts[1] && cuts[1] < cuts[2] {
            break;
        }
    }
    let [p1, p2, p3] = cuts;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&order[..p1]);
    out.extend_from_slice(&order[p2..p3]);
    out.extend_from_slice(&order[p1..p2]);
    out.extend_from_slice(&order[p3..]);
    let ends = vec![order[p1 - 1], order[p1], order[p2 - 1], order[p2], order[p3 - 1], order[p3 % n], order[n - 1], order[0]];
    (out, ends)
}

pub(crate) fn check_rule_matrix(m: &SquareMatrix, n: usize, what: &str) -> Result<(), RuleError> {
    if m.n() != n {
        return Err(RuleError::new(format!("{what} returned a {0}x{0} matrix, expected {n}x{n}", m.n())));
    }
    if !m.all_finite() {
        return Err(RuleError::new(format!("{what} returned non-finite entries")));
    }
    Ok(())
}

/// Guided local search. Round 1 descends on the true distances from a
/// nearest-neighbour tour. Every later round asks the rule for a working
/// matrix, kicks the current tour with a double bridge and descends on the
/// working matrix. `instance_index` selects the kick stream.
pub fn gls_search(
    inst: &TspInstance,
    rule: &dyn EdgePenaltyRule,
    params: &GlsParams,
    instance_index: u64,
) -> Result<SearchReport, HarnessError> {
    let started = Instant::now();
    let cap = params.time_limit();
    let d = distance_matrix(inst);
    let n = d.n();
    let nb = Neighbors::new(&d, RELOCATE_NEIGHBORS);
    let ls = LocalSearch::new(&d, &nb, Default::default());
    let mut st = TourState::new(nearest_neighbor_tour(&d, 0));
    st.activate_all();
    ls.descend(&mut st, true);
    st.take_touched();

    let mut current = st.order().to_vec();
    let mut best = current.clone();
    let mut best_len = tour_length(&best, &d);
    let mut trace = vec![best_len];
    let mut used = SquareMatrix::zeros(n);
    add_tour_edges(&mut used, &current);
    let mut rng = SplitMix64::for_instance(params.seed, instance_index);

    for _ in 2..=params.max_rounds {
        if started.elapsed() >= cap {
            break;
        }
        let w = rule.update_edge_distance(&d, &current, &used)?;
        check_rule_matrix(&w, n, "update_edge_distance")?;
        let w = if w.is_symmetric() { w } else { w.symmetrized() };
        let (kicked, ends) = double_bridge(&current, &mut rng);
        st.set_order(&kicked);
        if w.as_flat() == d.as_flat() {
            for c in ends {
                st.activate(c);
            }
            ls.descend(&mut st, false);
        } else {
            st.activate_all();
            ls.descend_arbitrary(&mut st, &w);
        }
        st.take_touched();
        current.copy_from_slice(st.order());
        let len = tour_length(&current, &d);
        if len < best_len {
            best_len = len;
            best.copy_from_slice(&current);
        }
        trace.push(best_len);
        add_tour_edges(&mut used, &current);
    }
    Ok(SearchReport { best: Tour { order: best, length: best_len }, trace })
}

pub fn run_gls(inst: &TspInstance, rule: &dyn EdgePenaltyRule, params: &GlsParams, instance_index: u64) -> EvalOutcome {
    let started = Instant::now();
    EvalOutcome::from_result(gls_search(inst, rule, params, instance_index).map(|r| r.best.length), started)
}
