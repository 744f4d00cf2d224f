//! Rule hook signatures and the built-in rule registry.
//!
//! Every built-in rule ships with the Python source an external worker would
//! execute for the same behaviour. Generated code whose normalized text
//! equals one of those sources is bound to the native implementation.

use std::fmt;

use super::RuleKind;
use crate::matrix::SquareMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleError(pub String);

impl fmt::Display for RuleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuleError {}

impl RuleError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

pub trait NextNodeRule: Send + Sync {
    /// `unvisited` is ascending and never empty.
    fn select_next_node(
        &self,
        current: usize,
        destination: usize,
        unvisited: &[usize],
        dist: &SquareMatrix,
    ) -> Result<usize, RuleError>;
}

pub trait EdgePenaltyRule: Send + Sync {
    fn update_edge_distance(
        &self,
        edge_distance: &SquareMatrix,
        local_opt_tour: &[usize],
        edge_n_used: &SquareMatrix,
    ) -> Result<SquareMatrix, RuleError>;
}

pub trait EdgeIndicatorRule: Send + Sync {
    fn adaptive_indicators(&self, dist: &SquareMatrix) -> Result<SquareMatrix, RuleError>;
}

pub trait BinScoreRule: Send + Sync {
    /// One score per entry of `bins` (remaining capacities of open bins).
    fn score(&self, item: f64, bins: &[f64]) -> Result<Vec<f64>, RuleError>;
}

#[derive(Clone, Copy)]
pub enum NativeRule {
    NextNode(&'static dyn NextNodeRule),
    EdgePenalty(&'static dyn EdgePenaltyRule),
    EdgeIndicator(&'static dyn EdgeIndicatorRule),
    BinScore(&'static dyn BinScoreRule),
}

impl fmt::Debug for NativeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NativeRule({:?})", self.kind())
    }
}

impl NativeRule {
    pub fn kind(&self) -> RuleKind {
        match self {
            NativeRule::NextNode(_) => RuleKind::NextNode,
            NativeRule::EdgePenalty(_) => RuleKind::EdgePenaltyUpdate,
            NativeRule::EdgeIndicator(_) => RuleKind::EdgeIndicator,
            NativeRule::BinScore(_) => RuleKind::BinScore,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NativeRuleSpec {
    pub name: &'static str,
    pub idea: &'static str,
    pub source: &'static str,
    pub rule: NativeRule,
}

impl NativeRuleSpec {
    pub fn kind(&self) -> RuleKind {
        self.rule.kind()
    }
}

macro_rules! asset {
    ($file:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/rules/", $file))
    };
}

static REGISTRY: &[NativeRuleSpec] = &[
    NativeRuleSpec {
        name: "nearest_neighbor",
        idea: "Always move to the closest unvisited city.",
        source: asset!("next_node_nearest_neighbor.py"),
        rule: NativeRule::NextNode(&NearestNeighbor),
    },
    NativeRuleSpec {
        name: "far_first",
        idea: "Prefer close cities that lie far from the start so the tour can close cheaply.",
        source: asset!("next_node_far_first.py"),
        rule: NativeRule::NextNode(&FarFirst),
    },
    NativeRuleSpec {
        name: "threshold_lookahead",
        idea: "Among cities closer than half the mean distance, balance proximity, cluster cohesion and spread.",
        source: asset!("next_node_threshold_lookahead.py"),
        rule: NativeRule::NextNode(&ThresholdLookahead),
    },
    NativeRuleSpec {
        name: "identity",
        idea: "Keep the original distances, relying on perturbation alone.",
        source: asset!("edge_penalty_identity.py"),
        rule: NativeRule::EdgePenalty(&IdentityPenalty),
    },
    NativeRuleSpec {
        name: "usage_scaled",
        idea: "Inflate each edge by ten percent per local optimum it appeared in.",
        source: asset!("edge_penalty_usage_scaled.py"),
        rule: NativeRule::EdgePenalty(&UsageScaled),
    },
    NativeRuleSpec {
        name: "windowed_usage",
        idea: "Rescale edges within a window of five tour positions by usage, decaying rarely used ones.",
        source: asset!("edge_penalty_windowed_usage.py"),
        rule: NativeRule::EdgePenalty(&WindowedUsage),
    },
    NativeRuleSpec {
        name: "zero",
        idea: "No edge is worth penalizing.",
        source: asset!("edge_indicator_zero.py"),
        rule: NativeRule::EdgeIndicator(&ZeroIndicator),
    },
    NativeRuleSpec {
        name: "uniform",
        idea: "Every edge is equally suspicious, so penalize by length alone.",
        source: asset!("edge_indicator_uniform.py"),
        rule: NativeRule::EdgeIndicator(&UniformIndicator),
    },
    NativeRuleSpec {
        name: "distance",
        idea: "Long edges are quadratically more suspicious.",
        source: asset!("edge_indicator_distance.py"),
        rule: NativeRule::EdgeIndicator(&DistanceIndicator),
    },
    NativeRuleSpec {
        name: "mst_density",
        idea: "Combine node density with how much an edge exceeds the average spanning-tree edge.",
        source: asset!("edge_indicator_mst_density.py"),
        rule: NativeRule::EdgeIndicator(&MstDensity),
    },
    NativeRuleSpec {
        name: "best_fit",
        idea: "Put the item in the fullest bin that still fits it.",
        source: asset!("bin_score_best_fit.py"),
        rule: NativeRule::BinScore(&BestFit),
    },
    NativeRuleSpec {
        name: "first_fit",
        idea: "Put the item in the oldest bin that fits it.",
        source: asset!("bin_score_first_fit.py"),
        rule: NativeRule::BinScore(&FirstFit),
    },
    NativeRuleSpec {
        name: "worst_fit",
        idea: "Put the item in the emptiest bin.",
        source: asset!("bin_score_worst_fit.py"),
        rule: NativeRule::BinScore(&WorstFit),
    },
    NativeRuleSpec {
        name: "ratio_penalty",
        idea: "Favour exact fits, then score bins by leftover ratio with proximity and underuse penalties.",
        source: asset!("bin_score_ratio_penalty.py"),
        rule: NativeRule::BinScore(&RatioPenalty),
    },
];

pub fn native_rules() -> &'static [NativeRuleSpec] {
    REGISTRY
}

pub fn native_rules_of(kind: RuleKind) -> impl Iterator<Item = &'static NativeRuleSpec> {
    REGISTRY.iter().filter(move |s| s.kind() == kind)
}

pub fn find_native_rule(kind: RuleKind, name: &str) -> Option<&'static NativeRuleSpec> {
    native_rules_of(kind).find(|s| s.name == name)
}

/// Drops blank and comment-only lines and trailing whitespace.
pub fn normalize_source(code: &str) -> String {
    let mut out = String::with_capacity(code.len());
    for line in code.lines() {
        let line = line.trim_end();
        let t = line.trim_start();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Binds code to a built-in rule: `native:<name>` or a normalized source match.
pub fn resolve_code(kind: RuleKind, code: &str) -> Option<&'static NativeRuleSpec> {
    if let Some(name) = code.trim().strip_prefix("native:") {
        return find_native_rule(kind, name.trim());
    }
    let norm = normalize_source(code);
    native_rules_of(kind).find(|s| normalize_source(s.source) == norm)
}

fn argmin_by(items: &[usize], mut key: impl FnMut(usize) -> f64) -> usize {
    let mut best = items[0];
    let mut best_v = key(best);
    for &x in &items[1..] {
        let v = key(x);
        if v < best_v {
            best = x;
            best_v = v;
        }
    }
    best
}

struct NearestNeighbor;

impl NextNodeRule for NearestNeighbor {
    fn select_next_node(&self, current: usize, _: usize, unvisited: &[usize], dist: &SquareMatrix) -> Result<usize, RuleError> {
        let row = dist.row(current);
        Ok(argmin_by(unvisited, |x| row[x]))
    }
}

struct FarFirst;

impl NextNodeRule for FarFirst {
    fn select_next_node(&self, current: usize, destination: usize, unvisited: &[usize], dist: &SquareMatrix) -> Result<usize, RuleError> {
        let row = dist.row(current);
        Ok(argmin_by(unvisited, |x| row[x] - 0.3 * dist.get(x, destination)))
    }
}

struct ThresholdLookahead;

impl NextNodeRule for ThresholdLookahead {
    fn select_next_node(&self, current: usize, _: usize, unvisited: &[usize], dist: &SquareMatrix) -> Result<usize, RuleError> {
        let row = dist.row(current);
        let m = unvisited.len() as f64;
        let avg = unvisited.iter().map(|&u| row[u]).sum::<f64>() / m;
        let threshold = 0.5 * avg;
        let close: Vec<usize> = unvisited.iter().copied().filter(|&u| row[u] <= threshold).collect();
        if !close.is_empty() {
            let k = close.len();
            return Ok(argmin_by(&close, |node| {
                let r = dist.row(node);
                let immediate = row[node];
                let future = if k > 1 { close.iter().map(|&c| r[c]).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
                let diversity = unvisited.iter().map(|&u| r[u]).sum::<f64>() / m / (immediate + 1.0);
                immediate + 0.6 * (1.0 - future) - 0.4 * diversity
            }));
        }
        let far: Vec<usize> = unvisited.iter().copied().filter(|&u| row[u] > threshold).collect();
        if far.is_empty() {
            return Err(RuleError::new("select_next_node returned None"));
        }
        Ok(argmin_by(&far, |x| row[x]))
    }
}

struct IdentityPenalty;

impl EdgePenaltyRule for IdentityPenalty {
    fn update_edge_distance(&self, d: &SquareMatrix, _: &[usize], _: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        Ok(d.clone())
    }
}

struct UsageScaled;

impl EdgePenaltyRule for UsageScaled {
    fn update_edge_distance(&self, d: &SquareMatrix, _: &[usize], used: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        Ok(SquareMatrix::from_fn(d.n(), |i, j| d.get(i, j) * (1.0 + 0.1 * used.get(i, j))))
    }
}

struct WindowedUsage;

impl EdgePenaltyRule for WindowedUsage {
    fn update_edge_distance(&self, d: &SquareMatrix, tour: &[usize], used: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        let mut out = d.clone();
        let n = tour.len();
        for i in 0..n {
            let a = tour[i];
            for j in 1..=5 {
                let b = tour[(i + j) % n];
                let count = used.get(a, b);
                let factor = if count >= 2.0 { (count + 1.0).ln() * 0.5 } else { (-0.1 * count).exp() };
                out.set(a, b, out.get(a, b) * factor);
                out.set(b, a, out.get(b, a) * factor);
                let quality = d.get(a, b) / (count + 1.0);
                out.add(a, b, quality);
                out.add(b, a, quality);
            }
        }
        Ok(out)
    }
}

struct ZeroIndicator;

impl EdgeIndicatorRule for ZeroIndicator {
    fn adaptive_indicators(&self, d: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        Ok(SquareMatrix::zeros(d.n()))
    }
}

struct UniformIndicator;

impl EdgeIndicatorRule for UniformIndicator {
    fn adaptive_indicators(&self, d: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        Ok(SquareMatrix::filled(d.n(), 1.0))
    }
}

struct DistanceIndicator;

impl EdgeIndicatorRule for DistanceIndicator {
    fn adaptive_indicators(&self, d: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        Ok(d.clone())
    }
}

struct MstDensity;

impl EdgeIndicatorRule for MstDensity {
    fn adaptive_indicators(&self, d: &SquareMatrix) -> Result<SquareMatrix, RuleError> {
        let n = d.n();
        let mut min_edge = vec![f64::INFINITY; n];
        min_edge[0] = 0.0;
        let mut visited = vec![false; n];
        let mut mst = 0.0;
        for _ in 0..n {
            let mut u = 0;
            let mut best = f64::INFINITY;
            let mut found = false;
            for v in 0..n {
                let key = if visited[v] { f64::INFINITY } else { min_edge[v] };
                if !found || key < best {
                    u = v;
                    best = key;
                    found = true;
                }
            }
            visited[u] = true;
            mst += min_edge[u];
            for v in 0..n {
                if !visited[v] && d.get(u, v) < min_edge[v] {
                    min_edge[v] = d.get(u, v);
                }
            }
        }
        let inv = SquareMatrix::from_fn(n, |i, j| 1.0 / (d.get(i, j) + if i == j { 1.0 } else { 0.0 }));
        let density: Vec<f64> = (0..n).map(|i| inv.row(i).iter().sum()).collect();
        let mean_mst_edge = mst / (n as f64 - 1.0);
        let mut ind = SquareMatrix::zeros(n);
        for i in 0..n {
            let ri = inv.row(i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let rj = inv.row(j);
                let base = density[i] * density[j] / (1.0 + density[i] + density[j]);
                let edge_cost = d.get(i, j) - mean_mst_edge;
                let target = inv.get(i, j);
                let below = ri.iter().zip(rj).filter(|(a, b)| *a + *b < target).count();
                let cycle_penalty = below as f64 * (d.get(i, j) * 0.2);
                let v = (base - cycle_penalty) * edge_cost;
                ind.set(i, j, if v > 0.0 { v } else { 0.0 });
            }
        }
        let max = ind.as_flat().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > 0.0 {
            ind = SquareMatrix::from_fn(n, |i, j| ind.get(i, j) / max);
        }
        Ok(ind)
    }
}

struct BestFit;

impl BinScoreRule for BestFit {
    fn score(&self, item: f64, bins: &[f64]) -> Result<Vec<f64>, RuleError> {
        Ok(bins.iter().map(|&b| -(b - item)).collect())
    }
}

struct FirstFit;

impl BinScoreRule for FirstFit {
    fn score(&self, _: f64, bins: &[f64]) -> Result<Vec<f64>, RuleError> {
        Ok((0..bins.len()).map(|i| -(i as f64)).collect())
    }
}

struct WorstFit;

impl BinScoreRule for WorstFit {
    fn score(&self, item: f64, bins: &[f64]) -> Result<Vec<f64>, RuleError> {
        Ok(bins.iter().map(|&b| b - item).collect())
    }
}

struct RatioPenalty;

impl BinScoreRule for RatioPenalty {
    fn score(&self, item: f64, bins: &[f64]) -> Result<Vec<f64>, RuleError> {
        let mut scores = vec![0.0; bins.len()];
        let max_cap = bins.iter().copied().filter(|&b| b > item).fold(f64::NAN, f64::max);
        if max_cap.is_nan() {
            return Ok(scores);
        }
        for (s, &b) in scores.iter_mut().zip(bins) {
            if b == max_cap {
                *s = f64::NEG_INFINITY;
            }
        }
        for (s, &f) in scores.iter_mut().zip(bins) {
            if f <= item {
                continue;
            }
            let remaining = (f - item) / f;
            let ratio = item / f;
            let proximity = if f >= item * 0.90 { -5.0 } else { 0.0 } + if f < item * 0.80 { -7.0 } else { 0.0 };
            let underuse = -3.0 * (item - 0.5 * f).max(0.0);
            *s = remaining + proximity + underuse - (1.0 - ratio).powi(3);
        }
        Ok(scores)
    }
}
