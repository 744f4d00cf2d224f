//! Classic baselines over a dataset.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::executor::evaluate_native;
use crate::harnesses::rules::find_native_rule;
use crate::instances::{bpp_lower_bound, Dataset, ProblemKind, ReferenceKind};
use crate::scoring::{HarnessParams, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Baseline {
    NearestNeighbor,
    GlsIdentity,
    BestFit,
    FirstFit,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::NearestNeighbor => "nearest_neighbor",
            Baseline::GlsIdentity => "gls_identity",
            Baseline::BestFit => "best_fit",
            Baseline::FirstFit => "first_fit",
        }
    }

    fn binding(self) -> (TaskKind, &'static str) {
        match self {
            Baseline::NearestNeighbor => (TaskKind::ConstructiveTsp, "nearest_neighbor"),
            Baseline::GlsIdentity => (TaskKind::GlsTsp, "identity"),
            Baseline::BestFit => (TaskKind::OnlineBpp, "best_fit"),
            Baseline::FirstFit => (TaskKind::OnlineBpp, "first_fit"),
        }
    }

    pub fn defaults(kind: ProblemKind) -> &'static [Baseline] {
        match kind {
            ProblemKind::Tsp => &[Baseline::NearestNeighbor, Baseline::GlsIdentity],
            ProblemKind::Bpp => &[Baseline::BestFit, Baseline::FirstFit],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub method: String,
    pub size: usize,
    pub instances: usize,
    pub mean_objective: f64,
    pub mean_reference: f64,
    /// Mean per-instance gap to the reference (TSP) or excess over the
    /// lower bound (bin packing), in percent.
    pub gap_pct: f64,
    pub reference_kind: ReferenceKind,
    pub runtime_s: f64,
}

/// Runs one baseline; every instance must evaluate successfully.
pub fn run_baseline(ds: &Dataset, method: Baseline, harness: &HarnessParams) -> Result<BaselineRow, String> {
    if ds.is_empty() {
        return Err(format!("dataset {} is empty", ds.task_label));
    }
    let (kind, rule) = method.binding();
    if kind.problem() != ds.kind() {
        return Err(format!("{} does not apply to {:?} datasets", method.name(), ds.kind()));
    }
    let (refs, reference_kind, size) = match (ds.tsp(), ds.bpp()) {
        (Some(v), _) => {
            let refs = ds
                .references()
                .ok_or_else(|| format!("dataset {} has no reference objectives; regenerate it with gen-data", ds.task_label))?;
            (refs.to_vec(), ds.reference_kind.unwrap_or(ReferenceKind::Incumbent), v[0].n())
        }
        (None, Some(v)) => {
            (v.iter().map(|b| bpp_lower_bound(b) as f64).collect(), ReferenceKind::LowerBound, v[0].weights().len())
        }
        (None, None) => unreachable!("dataset is either TSP or bin packing"),
    };
    let spec = find_native_rule(kind.rule_kind(), rule).expect("baseline rules are registered");
    let t0 = Instant::now();
    let outcomes = evaluate_native(kind, spec.rule, &ds.instances, harness);
    let runtime_s = t0.elapsed().as_secs_f64();
    let mut objs = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        match o.objective() {
            Some(v) => objs.push(v),
            None => return Err(format!("{} failed on instance {i}: {:?}", method.name(), o.status)),
        }
    }
    let n = objs.len() as f64;
    let gap = objs.iter().zip(&refs).map(|(o, r)| (o - r) / r).sum::<f64>() / n;
    Ok(BaselineRow {
        dataset: ds.task_label.clone(),
        method: method.name().into(),
        size,
        instances: objs.len(),
        mean_objective: objs.iter().sum::<f64>() / n,
        mean_reference: refs.iter().sum::<f64>() / n,
        gap_pct: 100.0 * gap + 0.0,
        reference_kind,
        runtime_s,
    })
}

pub const CSV_HEADER: &str = "dataset,method,size,instances,mean_objective,mean_reference,gap_pct,reference_kind,runtime_s";

fn kind_tag(k: ReferenceKind) -> &'static str {
    match k {
        ReferenceKind::Optimal => "optimal",
        ReferenceKind::Incumbent => "incumbent",
        ReferenceKind::LowerBound => "lower_bound",
    }
}

pub fn to_csv(rows: &[BaselineRow], seeds: &[Option<u64>]) -> String {
    let mut out = String::new();
    writeln!(out, "# seed: {}", seed_list(seeds)).unwrap();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.4},{},{:.3}",
            r.dataset,
            r.method,
            r.size,
            r.instances,
            r.mean_objective,
            r.mean_reference,
            r.gap_pct,
            kind_tag(r.reference_kind),
            r.runtime_s
        )
        .unwrap();
    }
    out
}

pub fn to_table(rows: &[BaselineRow], seeds: &[Option<u64>]) -> String {
    let mut out = String::new();
    writeln!(out, "seed: {}", seed_list(seeds)).unwrap();
    writeln!(
        out,
        "{:<24} {:<18} {:>6} {:>6} {:>14} {:>10} {:>11} {:>10}",
        "dataset", "method", "size", "count", "mean_objective", "gap_%", "reference", "runtime_s"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<24} {:<18} {:>6} {:>6} {:>14.4} {:>10.3} {:>11} {:>10.2}",
            r.dataset,
            r.method,
            r.size,
            r.instances,
            r.mean_objective,
            r.gap_pct,
            kind_tag(r.reference_kind),
            r.runtime_s
        )
        .unwrap();
    }
    out
}

fn seed_list(seeds: &[Option<u64>]) -> String {
    seeds.iter().map(|s| s.map_or_else(|| "unknown".to_string(), |s| s.to_string())).collect::<Vec<_>>().join(" ")
}
