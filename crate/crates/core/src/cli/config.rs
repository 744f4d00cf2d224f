//! The run configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::harnesses::references::{attach_references, ReferenceParams};
use crate::instances::{gen_bpp_dataset, gen_tsp_dataset, load_dataset, ProblemKind};
use crate::llm::provider::{DEFAULT_ENDPOINT, DEFAULT_MODEL};
use crate::llm::{TranscriptMode, DEFAULT_CONCURRENCY};
use crate::metaloop::MetaLoopConfig;
use crate::sandbox::ResourceLimits;
use crate::scoring::{HarnessParams, TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths are resolved against the config file's directory.
    pub out_dir: PathBuf,
    #[serde(default)]
    pub metaloop: MetaLoopConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    pub tasks: Vec<TaskConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub limit: u64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { limit: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub mode: TranscriptMode,
    /// Replay source, or the recording target. Defaults to the run
    /// directory's `transcript.jsonl`.
    pub transcript: Option<PathBuf>,
    pub endpoint: String,
    pub model: String,
    pub concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            mode: TranscriptMode::Live,
            transcript: None,
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxConfig {
    /// Worker command line; without one only built-in code can run.
    pub worker: Vec<String>,
    /// Heuristic evaluation workers; 0 means one per core.
    pub pool_size: usize,
    pub limits: ResourceLimits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub kind: TaskKind,
    #[serde(default = "one")]
    pub weight: f64,
    /// A dataset file written by `gen-data`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Or a dataset generated on the fly.
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
    #[serde(default)]
    pub harness: HarnessParams,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    /// Cities for TSP, items for bin packing.
    pub size: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub capacity: Option<u32>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.out_dir = resolve(&base, &cfg.out_dir);
        cfg.llm.transcript = cfg.llm.transcript.as_ref().map(|t| resolve(&base, t));
        for t in &mut cfg.tasks {
            t.dataset = t.dataset.as_ref().map(|d| resolve(&base, d));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.metaloop.validate(self.tasks.len(), self.budget.limit)?;
        self.sandbox.limits.validate()?;
        if self.llm.concurrency == 0 {
            return Err("llm.concurrency must be at least 1".into());
        }
        if self.llm.mode == TranscriptMode::Replay && self.llm.transcript.is_none() {
            return Err("llm.mode = \"replay\" needs llm.transcript".into());
        }
        for t in &self.tasks {
            if t.dataset.is_some() == t.generate.is_some() {
                return Err(format!("task {}: set exactly one of `dataset` and `generate`", t.id));
            }
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(format!("task {}: weight must be positive", t.id));
            }
            t.harness.gls.validate().map_err(|e| format!("task {}: {e}", t.id))?;
        }
        Ok(())
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.llm.transcript.clone().unwrap_or_else(|| crate::llm::transcript_path(&self.out_dir))
    }

    pub fn build_tasks(&self) -> Result<Vec<TaskSpec>, String> {
        self.tasks.iter().map(TaskConfig::build).collect()
    }
}

impl TaskConfig {
    pub fn build(&self) -> Result<TaskSpec, String> {
        let ds = match (&self.dataset, &self.generate) {
            (Some(path), _) => load_dataset(path).map_err(|e| e.to_string())?,
            (None, Some(g)) => {
                let mut ds = match self.kind.problem() {
                    ProblemKind::Tsp => gen_tsp_dataset(g.size, g.count, g.seed),
                    ProblemKind::Bpp => gen_bpp_dataset(g.size, g.capacity.unwrap_or(100), g.count, g.seed),
                }
                .map_err(|e| e.to_string())?;
                if self.kind.problem() == ProblemKind::Tsp {
                    attach_references(&mut ds, &ReferenceParams::default()).map_err(|e| e.to_string())?;
                }
                ds
            }
            (None, None) => return Err(format!("task {}: no dataset", self.id)),
        };
        TaskSpec::new(self.id.clone(), self.kind, Arc::new(ds), self.weight, self.harness.clone())
            .map_err(|e| format!("task {}: {e}", self.id))
    }
}
