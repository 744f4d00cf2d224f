//! Fixed-capacity, cost-ranked populations of heuristics or optimizers.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_CAPACITY: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    /// Outer iteration that produced the individual (0 for seeds).
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    /// What produced it: `seed`, `init`, `optimizer`, `meta`, `inference`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub idea: String,
    pub code: String,
    pub cost: f64,
    pub origin: Origin,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndividualError {
    #[error("code is empty")]
    EmptyCode,
    #[error("cost {0} is not finite")]
    NonFiniteCost(f64),
}

/// Short stable identifier: the first 6 bytes of the code digest, in hex.
pub fn code_id(code: &str) -> String {
    hex::encode(&code_digest(code)[..6])
}

pub fn code_digest(code: &str) -> [u8; 32] {
    Sha256::digest(code.as_bytes()).into()
}

impl Individual {
    /// The id is a short digest of the code text.
    pub fn new(idea: impl Into<String>, code: impl Into<String>, cost: f64, origin: Origin) -> Result<Self, IndividualError> {
        let code = code.into();
        if code.trim().is_empty() {
            return Err(IndividualError::EmptyCode);
        }
        if !cost.is_finite() {
            return Err(IndividualError::NonFiniteCost(cost));
        }
        let id = code_id(&code);
        Ok(Self { id, idea: idea.into(), code, cost, origin })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Full and not strictly better than the worst member.
    NotBetter,
    /// Same code text as a current member.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome {
    Accepted { evicted: Option<Individual> },
    Rejected(RejectReason),
}

impl InsertOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, InsertOutcome::Accepted { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PopulationError {
    #[error("rank {index} out of range for population of {size}")]
    RankOutOfRange { index: usize, size: usize },
    #[error("population is empty")]
    Empty,
}

#[derive(Debug, Clone)]
struct Entry {
    seq: u64,
    ind: Individual,
}

impl Entry {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.ind.cost.total_cmp(&other.ind.cost).then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Max-heap on (cost, insertion order): the root is the member to evict.
/// Among equal costs the earlier insert ranks better.
#[derive(Debug, Clone)]
pub struct Population {
    label: String,
    capacity: usize,
    heap: BinaryHeap<Entry>,
    codes: HashSet<[u8; 32]>,
    next_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMember {
    pub seq: u64,
    #[serde(flatten)]
    pub individual: Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub label: String,
    pub capacity: usize,
    pub next_seq: u64,
    /// Best first.
    pub members: Vec<RankedMember>,
}

impl Population {
    pub fn new(label: impl Into<String>, capacity: usize) -> Self {
        assert!(capacity > 0, "population capacity must be positive");
        Self { label: label.into(), capacity, heap: BinaryHeap::new(), codes: HashSet::new(), next_seq: 0 }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn size(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains_code(&self, code: &str) -> bool {
        self.codes.contains(&code_digest(code))
    }

    pub fn insert(&mut self, ind: Individual) -> InsertOutcome {
        let digest = code_digest(&ind.code);
        if self.codes.contains(&digest) {
            return InsertOutcome::Rejected(RejectReason::Duplicate);
        }
        let mut evicted = None;
        if self.heap.len() >= self.capacity {
            let worst = self.heap.peek().expect("full heap");
            if ind.cost.total_cmp(&worst.ind.cost) != Ordering::Less {
                return InsertOutcome::Rejected(RejectReason::NotBetter);
            }
            let out = self.heap.pop().expect("full heap").ind;
            self.codes.remove(&code_digest(&out.code));
            evicted = Some(out);
        }
        self.codes.insert(digest);
        self.heap.push(Entry { seq: self.next_seq, ind });
        self.next_seq += 1;
        InsertOutcome::Accepted { evicted }
    }

    fn ranked_entries(&self) -> Vec<&Entry> {
        let mut v: Vec<&Entry> = self.heap.iter().collect();
        v.sort();
        v
    }

    /// Members best first.
    pub fn ranked(&self) -> Vec<&Individual> {
        self.ranked_entries().into_iter().map(|e| &e.ind).collect()
    }

    pub fn get_by_rank(&self, index: usize) -> Result<&Individual, PopulationError> {
        self.ranked()
            .get(index)
            .copied()
            .ok_or(PopulationError::RankOutOfRange { index, size: self.size() })
    }

    pub fn best(&self) -> Option<&Individual> {
        self.ranked().first().copied()
    }

    pub fn get_random<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&Individual, PopulationError> {
        if self.is_empty() {
            return Err(PopulationError::Empty);
        }
        let ranked = self.ranked();
        Ok(ranked[rng.random_range(0..ranked.len())])
    }

    pub fn snapshot(&self) -> PopulationSnapshot {
        PopulationSnapshot {
            label: self.label.clone(),
            capacity: self.capacity,
            next_seq: self.next_seq,
            members: self
                .ranked_entries()
                .into_iter()
                .map(|e| RankedMember { seq: e.seq, individual: e.ind.clone() })
                .collect(),
        }
    }

    pub fn from_snapshot(s: PopulationSnapshot) -> Self {
        let mut p = Population::new(s.label, s.capacity);
        for m in s.members {
            p.codes.insert(code_digest(&m.individual.code));
            p.heap.push(Entry { seq: m.seq, ind: m.individual });
        }
        p.next_seq = s.next_seq;
        p
    }
}
