use std::time::Instant;

use super::gls::{check_rule_matrix, double_bridge, SearchReport};
use super::local_search::{TourState, RELOCATE_NEIGHBORS};
use super::{
    nearest_neighbor_tour, tour_length, EdgeIndicatorRule, EvalOutcome, GlsParams, HarnessError, LocalSearch,
    Neighbors, RuleError, Tour,
};
use crate::instances::{distance_matrix, TspInstance};
use crate::matrix::SquareMatrix;
use crate::rng::SplitMix64;

/// Knowledge-guided local search. The indicator matrix is computed once; each
/// round penalizes the tour edge maximizing `ind * d / (1 + penalty)`,
/// descends on `d + lambda * penalty` from that edge's endpoints and, with
/// [`GlsParams::polish`], re-descends on `d` from the cities that moved. Lambda follows the
/// incumbent: `lambda_scale * best / n`. Stops early when no edge has
/// positive utility. See [`GlsParams::penalty_reset`] for restarts.
pub fn kgls_search(inst: &TspInstance, rule: &dyn EdgeIndicatorRule, params: &GlsParams) -> Result<SearchReport, HarnessError> {
    let started = Instant::now();
    let cap = params.time_limit();
    let d = distance_matrix(inst);
    let n = d.n();
    let ind = rule.adaptive_indicators(&d)?;
    check_rule_matrix(&ind, n, "adaptive_indicators")?;
    if ind.as_flat().iter().any(|&v| v < 0.0) {
        return Err(RuleError::new("adaptive_indicators returned negative entries").into());
    }

    let nb = Neighbors::new(&d, RELOCATE_NEIGHBORS);
    let ls = LocalSearch::new(&d, &nb, Default::default());
    let mut st = TourState::new(nearest_neighbor_tour(&d, 0));
    st.activate_all();
    ls.descend(&mut st, true);
    st.take_touched();

    let mut best = st.order().to_vec();
    let mut best_len = tour_length(&best, &d);
    let mut trace = vec![best_len];
    let mut lambda = params.lambda_scale * best_len / n as f64;
    let mut penalties = SquareMatrix::zeros(n);

    let mut stall = 0;
    let mut rng = SplitMix64::for_instance(params.seed, 0);
    for _ in 2..=params.max_rounds {
        if started.elapsed() >= cap {
            break;
        }
        if params.penalty_reset.is_some_and(|r| stall >= r) {
            stall = 0;
            penalties = SquareMatrix::zeros(n);
            let (kicked, ends) = double_bridge(&best, &mut rng);
            st.set_order(&kicked);
            for c in ends {
                st.activate(c);
            }
            ls.descend(&mut st, false);
            st.take_touched();
        }
        let order = st.order();
        let mut pick = None;
        let mut top = 0.0;
        for i in 0..n {
            let (u, v) = (order[i], order[(i + 1) % n]);
            let util = ind.get(u, v) * d.get(u, v) / (1.0 + penalties.get(u, v));
            if util > top {
                top = util;
                pick = Some((u, v));
            }
        }
        let Some((u, v)) = pick else { break };
        penalties.add(u, v, 1.0);
        penalties.add(v, u, 1.0);
        st.activate(u);
        st.activate(v);
        ls.descend_penalized(&mut st, &penalties, lambda);
        if params.polish {
            for c in st.take_touched() {
                st.activate(c);
            }
            ls.descend(&mut st, false);
        }
        st.take_touched();
        stall += 1;
        let len = tour_length(st.order(), &d);
        if len < best_len {
            best_len = len;
            best.copy_from_slice(st.order());
            lambda = params.lambda_scale * best_len / n as f64;
            stall = 0;
        }
        trace.push(best_len);
    }
    Ok(SearchReport { best: Tour { order: best, length: best_len }, trace })
}

pub fn run_kgls(inst: &TspInstance, rule: &dyn EdgeIndicatorRule, params: &GlsParams) -> EvalOutcome {
    let started = Instant::now();
    EvalOutcome::from_result(kgls_search(inst, rule, params).map(|r| r.best.length), started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harnesses::rules::{find_native_rule, native_rules_of};
    use crate::harnesses::{is_permutation, local_search, EvalStatus, NativeRule, RuleKind};
    use crate::instances::{gen_tsp_dataset, held_karp_optimal};

    fn rule(name: &str) -> &'static dyn EdgeIndicatorRule {
        match find_native_rule(RuleKind::EdgeIndicator, name).unwrap().rule {
            NativeRule::EdgeIndicator(r) => r,
            _ => unreachable!(),
        }
    }

    fn params(rounds: u32) -> GlsParams {
        GlsParams { max_rounds: rounds, time_cap: 60.0, ..Default::default() }
    }

    #[test]
    fn zero_indicator_reduces_to_local_search() {
        let inst = gen_tsp_dataset(80, 1, 6).unwrap().tsp().unwrap()[0].clone();
        let d = distance_matrix(&inst);
        let rep = kgls_search(&inst, rule("zero"), &params(100)).unwrap();
        let direct = local_search(&nearest_neighbor_tour(&d, 0), &d, Default::default());
        assert_eq!(rep.best.order, direct.order);
        assert_eq!(rep.trace.len(), 1);
    }

    #[test]
    fn guided_rounds_improve_and_stay_monotone() {
        let inst = gen_tsp_dataset(100, 1, 3).unwrap().tsp().unwrap()[0].clone();
        let d = distance_matrix(&inst);
        for spec in native_rules_of(RuleKind::EdgeIndicator).filter(|s| s.name != "zero") {
            let NativeRule::EdgeIndicator(r) = spec.rule else { unreachable!() };
            let rep = kgls_search(&inst, r, &params(300)).unwrap();
            assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(rep.trace.last().unwrap() < &rep.trace[0], "{}", spec.name);
            assert!(is_permutation(&rep.best.order, 100));
            assert!((rep.best.length - tour_length(&rep.best.order, &d)).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_reaches_optimum_on_small_instances() {
        let ds = gen_tsp_dataset(12, 10, 21).unwrap();
        let mut hits = 0;
        for inst in ds.tsp().unwrap() {
            let (_, opt) = held_karp_optimal(inst).unwrap();
            let rep = kgls_search(inst, rule("uniform"), &params(300)).unwrap();
            assert!(rep.best.length >= opt - 1e-9);
            if rep.best.length <= opt * (1.0 + 1e-9) {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn square_optimum_is_kept() {
        let inst = TspInstance::new("sq", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let rep = kgls_search(&inst, rule("uniform"), &params(50)).unwrap();
        assert!((rep.best.length - 4.0).abs() < 1e-12);
        assert!(rep.trace.iter().all(|&l| (l - 4.0).abs() < 1e-12));
    }

    #[test]
    fn negative_indicators_are_rejected() {
        struct Neg;
        impl EdgeIndicatorRule for Neg {
            fn adaptive_indicators(&self, d: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
                Ok(SquareMatrix::filled(d.n(), -1.0))
            }
        }
        let inst = gen_tsp_dataset(10, 1, 1).unwrap().tsp().unwrap()[0].clone();
        assert!(matches!(run_kgls(&inst, &Neg, &params(5)).status, EvalStatus::RuleError { .. }));
    }
}
