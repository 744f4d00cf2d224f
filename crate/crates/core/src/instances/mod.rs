//! Problem instances, datasets and exact small-instance oracles.

mod exact;
mod generate;
mod io;
mod tsplib;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::matrix::SquareMatrix;

pub use exact::{held_karp_optimal, HELD_KARP_MAX_CITIES};
pub use generate::{gen_bpp_dataset, gen_tsp_dataset, WEIBULL_SCALE, WEIBULL_SHAPE};
pub use io::{load_dataset, save_dataset};
pub use tsplib::{load_tsplib, parse_tsplib, save_tsplib, TsplibInstance};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("instance has {n} cities; the exact solver accepts at most {max}")]
    TooLarge { n: usize, max: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("unsupported TSPLIB edge weight type `{0}` (only EUC_2D is accepted)")]
    UnsupportedEdgeWeight(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Bpp,
}

/// Euclidean TSP instance on points of the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    pub id: String,
    coords: Vec<[f64; 2]>,
}

impl TspInstance {
    pub fn new(id: impl Into<String>, coords: Vec<[f64; 2]>) -> Result<Self, InstanceError> {
        if coords.len() < 2 {
            return Err(InstanceError::Invalid(format!(
                "a TSP instance needs at least 2 cities, got {}",
                coords.len()
            )));
        }
        if let Some((i, p)) = coords
            .iter()
            .enumerate()
            .find(|(_, p)| !p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(InstanceError::Invalid(format!(
                "city {i} has coordinates {p:?} outside the unit square"
            )));
        }
        Ok(Self { id: id.into(), coords })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.coords[i], self.coords[j])
    }
}

/// Distance formula shared with external workers: `sqrt(dx*dx + dy*dy)`.
#[inline]
pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Materialized symmetric distance matrix with a zero diagonal.
pub fn distance_matrix(inst: &TspInstance) -> SquareMatrix {
    let n = inst.n();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let d = inst.distance(i, j);
            m.set(i, j, d);
            m.set(j, i, d);
        }
    }
    m
}

/// Online bin packing instance. Item order is the arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BppInstance {
    pub id: String,
    capacity: u32,
    weights: Vec<u32>,
}

impl BppInstance {
    pub fn new(id: impl Into<String>, capacity: u32, weights: Vec<u32>) -> Result<Self, InstanceError> {
        if capacity == 0 {
            return Err(InstanceError::Invalid("bin capacity must be positive".into()));
        }
        if weights.is_empty() {
            return Err(InstanceError::Invalid("a BPP instance needs at least one item".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, &w)| w == 0 || w > capacity) {
            return Err(InstanceError::Invalid(format!(
                "item {i} has weight {w}, outside [1, {capacity}]"
            )));
        }
        Ok(Self { id: id.into(), capacity, weights })
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }
}

/// `ceil(sum(weights) / capacity)`.
pub fn bpp_lower_bound(inst: &BppInstance) -> u64 {
    let total: u64 = inst.weights.iter().map(|&w| w as u64).sum();
    total.div_ceil(inst.capacity as u64)
}

/// Where the per-instance reference objectives of a dataset come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Proven optimal (exact dynamic programming).
    Optimal,
    /// Best tour of a long improvement run; gaps are gap-to-reference.
    Incumbent,
    /// Bin-packing lower bound.
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instances {
    Tsp(Vec<TspInstance>),
    Bpp(Vec<BppInstance>),
}

impl Instances {
    pub fn len(&self) -> usize {
        match self {
            Instances::Tsp(v) => v.len(),
            Instances::Bpp(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Instances::Tsp(_) => ProblemKind::Tsp,
            Instances::Bpp(_) => ProblemKind::Bpp,
        }
    }
}

/// An evaluation set: instances plus optional reference objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task_label: String,
    pub instances: Instances,
    references: Option<Vec<f64>>,
    pub reference_kind: Option<ReferenceKind>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(task_label: impl Into<String>, instances: Instances, provenance: Provenance) -> Self {
        Self {
            task_label: task_label.into(),
            instances,
            references: None,
            reference_kind: None,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn kind(&self) -> ProblemKind {
        self.instances.kind()
    }

    pub fn references(&self) -> Option<&[f64]> {
        self.references.as_deref()
    }

    /// Attaches references; they must align 1:1 with the instances and be
    /// strictly positive.
    pub fn set_references(&mut self, refs: Vec<f64>, kind: ReferenceKind) -> Result<(), InstanceError> {
        if refs.len() != self.len() {
            return Err(InstanceError::Invalid(format!(
                "{} references for {} instances",
                refs.len(),
                self.len()
            )));
        }
        if let Some((i, r)) = refs.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(InstanceError::Invalid(format!("reference {i} is {r}, must be > 0")));
        }
        self.references = Some(refs);
        self.reference_kind = Some(kind);
        Ok(())
    }

    pub fn tsp(&self) -> Option<&[TspInstance]> {
        match &self.instances {
            Instances::Tsp(v) => Some(v),
            Instances::Bpp(_) => None,
        }
    }

    pub fn bpp(&self) -> Option<&[BppInstance]> {
        match &self.instances {
            Instances::Bpp(v) => Some(v),
            Instances::Tsp(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TspInstance {
        TspInstance::new("sq", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn unit_square_distances() {
        let d = distance_matrix(&square());
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(1, 2), 1.0);
        assert_eq!(d.get(0, 2), 2f64.sqrt());
        assert_eq!(d.get(3, 3), 0.0);
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn distance_matrix_matches_naive_double_loop() {
        let ds = gen_tsp_dataset(10, 1, 3).unwrap();
        let inst = &ds.tsp().unwrap()[0];
        let d = distance_matrix(inst);
        for (i, a) in inst.coords().iter().enumerate() {
            for (j, b) in inst.coords().iter().enumerate() {
                let naive = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!((d.get(i, j) - naive).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn tsp_instance_validation() {
        assert!(TspInstance::new("x", vec![[0.0, 0.0]]).is_err());
        assert!(TspInstance::new("x", vec![[0.0, 0.0], [1.5, 0.0]]).is_err());
        assert!(TspInstance::new("x", vec![[0.0, f64::NAN], [0.5, 0.0]]).is_err());
    }

    #[test]
    fn bpp_validation_and_lower_bound() {
        assert!(BppInstance::new("b", 100, vec![]).is_err());
        assert!(BppInstance::new("b", 100, vec![0]).is_err());
        assert!(BppInstance::new("b", 100, vec![101]).is_err());
        let b = BppInstance::new("b", 100, vec![60, 60, 60]).unwrap();
        assert_eq!(bpp_lower_bound(&b), 2);
        let exact = BppInstance::new("b", 10, vec![5, 5, 4, 6, 10]).unwrap();
        assert_eq!(bpp_lower_bound(&exact), 3);
    }

    #[test]
    fn references_must_align_and_be_positive() {
        let mut ds = gen_tsp_dataset(5, 2, 0).unwrap();
        assert!(ds.set_references(vec![1.0], ReferenceKind::Optimal).is_err());
        assert!(ds.set_references(vec![1.0, 0.0], ReferenceKind::Optimal).is_err());
        ds.set_references(vec![1.0, 2.0], ReferenceKind::Optimal).unwrap();
        assert_eq!(ds.references(), Some(&[1.0, 2.0][..]));
    }
}
