//! Per-instance reference objectives for gap computation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rules::find_native_rule;
use super::{kgls_search, GlsParams, NativeRule, RuleKind};
use crate::instances::{
    bpp_lower_bound, held_karp_optimal, Dataset, InstanceError, Instances, ReferenceKind, TspInstance,
    HELD_KARP_MAX_CITIES,
};

/// Budget of the long improvement run used where exact solving is out of
/// reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceParams {
    pub max_rounds: u32,
    pub time_cap: f64,
    /// Penalty reset after `reset_rounds_per_city * n` rounds without a new
    /// incumbent.
    pub reset_rounds_per_city: Option<u32>,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        let g = GlsParams::default();
        Self { max_rounds: 10 * g.max_rounds, time_cap: 10.0 * g.time_cap, reset_rounds_per_city: None }
    }
}

/// Exact optimum for small instances, else the best tour of a long
/// uniform-indicator KGLS run without true-distance polishing, which is the
/// cheaper setting once the round budget is large.
pub fn tsp_reference(inst: &TspInstance, params: &ReferenceParams) -> (f64, ReferenceKind) {
    if inst.n() <= HELD_KARP_MAX_CITIES {
        let (_, len) = held_karp_optimal(inst).expect("size checked");
        return (len, ReferenceKind::Optimal);
    }
    let NativeRule::EdgeIndicator(uniform) = find_native_rule(RuleKind::EdgeIndicator, "uniform").expect("registered").rule
    else {
        unreachable!()
    };
    let gls = GlsParams {
        max_rounds: params.max_rounds,
        time_cap: params.time_cap,
        polish: false,
        penalty_reset: params.reset_rounds_per_city.map(|k| k.saturating_mul(inst.n() as u32)),
        ..GlsParams::default()
    };
    let rep = kgls_search(inst, uniform, &gls).expect("built-in indicator never fails");
    (rep.best.length, ReferenceKind::Incumbent)
}

pub fn compute_references(ds: &Dataset, params: &ReferenceParams) -> (Vec<f64>, ReferenceKind) {
    match &ds.instances {
        Instances::Bpp(v) => (v.iter().map(|b| bpp_lower_bound(b) as f64).collect(), ReferenceKind::LowerBound),
        Instances::Tsp(v) => {
            let out: Vec<(f64, ReferenceKind)> = v.par_iter().map(|t| tsp_reference(t, params)).collect();
            let kind = if out.iter().all(|(_, k)| *k == ReferenceKind::Optimal) {
                ReferenceKind::Optimal
            } else {
                ReferenceKind::Incumbent
            };
            (out.into_iter().map(|(r, _)| r).collect(), kind)
        }
    }
}

pub fn attach_references(ds: &mut Dataset, params: &ReferenceParams) -> Result<(), InstanceError> {
    let (refs, kind) = compute_references(ds, params);
    ds.set_references(refs, kind)
}
