//! Binding code to an execution path and running it.
//!
//! Heuristic code resolves to a built-in rule when it is `native:<name>` or
//! matches a shipped source; anything else goes to an external worker. The
//! same holds for optimizer code. [`RunHost`] is the callback surface one
//! optimizer run sees, whichever path executes it.

use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harnesses::rules::resolve_code;
use crate::harnesses::{
    run_constructive, run_gls, run_kgls, run_online_bpp, Deadline, EvalOutcome, EvalStatus, NativeRule,
};
use crate::instances::Instances;
use crate::llm::{LlmError, PromptRequest, TranscriptStore};
use crate::optimizers::{resolve_optimizer, CallbackError, OptimizerHost, OptimizerResult, SolutionView};
use crate::population::{Individual, Population};
use crate::sandbox::{spawn_worker, ResourceLimits, SandboxError, WorkerCommand, WorkerPool};
use crate::scoring::{task_cost, HarnessParams, TaskKind, TaskSpec, WORST_COST};

/// Runs a built-in rule over every instance in parallel.
pub fn evaluate_native(kind: TaskKind, rule: NativeRule, instances: &Instances, params: &HarnessParams) -> Vec<EvalOutcome> {
    let deadline = || Deadline::after(Duration::from_secs_f64(params.instance_timeout));
    match (kind, rule, instances) {
        (TaskKind::ConstructiveTsp, NativeRule::NextNode(r), Instances::Tsp(v)) => {
            v.par_iter().map(|t| run_constructive(t, r, 0, deadline())).collect()
        }
        (TaskKind::GlsTsp, NativeRule::EdgePenalty(r), Instances::Tsp(v)) => {
            v.par_iter().enumerate().map(|(i, t)| run_gls(t, r, &params.gls, i as u64)).collect()
        }
        (TaskKind::KglsTsp, NativeRule::EdgeIndicator(r), Instances::Tsp(v)) => {
            v.par_iter().map(|t| run_kgls(t, r, &params.gls)).collect()
        }
        (TaskKind::OnlineBpp, NativeRule::BinScore(r), Instances::Bpp(v)) => {
            v.par_iter().map(|b| run_online_bpp(b, r, deadline())).collect()
        }
        _ => (0..instances.len())
            .map(|_| EvalOutcome::rule_error(format!("rule kind does not fit task kind {kind:?}"), 0.0))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", content = "name", rename_all = "snake_case")]
pub enum Binding {
    Native(String),
    External,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicEval {
    pub cost: f64,
    pub outcomes: Vec<EvalOutcome>,
    pub binding: Binding,
    /// First failure message, if any instance failed.
    pub failure: Option<String>,
}

fn uniform_outcomes(n: usize, status: EvalStatus, elapsed: f64) -> Vec<EvalOutcome> {
    (0..n).map(|_| EvalOutcome { status: status.clone(), elapsed }).collect()
}

/// Evaluates heuristics for tasks, natively or in external workers.
#[derive(Clone, Default)]
pub struct Evaluator {
    workers: Option<Arc<WorkerPool>>,
}

impl Evaluator {
    pub fn native_only() -> Self {
        Self { workers: None }
    }

    pub fn with_workers(pool: Arc<WorkerPool>) -> Self {
        Self { workers: Some(pool) }
    }

    pub fn workers(&self) -> Option<&Arc<WorkerPool>> {
        self.workers.as_ref()
    }

    pub fn evaluate(&self, task: &TaskSpec, code: &str) -> HeuristicEval {
        let n = task.dataset.len();
        let (outcomes, binding) = match resolve_code(task.kind.rule_kind(), code) {
            Some(spec) => (evaluate_native(task.kind, spec.rule, &task.dataset.instances, &task.harness), Binding::Native(spec.name.into())),
            None => match &self.workers {
                None => (
                    uniform_outcomes(
                        n,
                        EvalStatus::RuleError {
                            message: "code is not a built-in rule and no external worker is configured".into(),
                        },
                        0.0,
                    ),
                    Binding::Unavailable,
                ),
                Some(pool) => {
                    let start = Instant::now();
                    let res = pool.with_worker(|h| h.eval_heuristic(task, code));
                    let el = start.elapsed().as_secs_f64();
                    let outcomes = match res {
                        Ok(statuses) => statuses.into_iter().map(|status| EvalOutcome { status, elapsed: el / n.max(1) as f64 }).collect(),
                        Err(SandboxError::Timeout(_)) => uniform_outcomes(n, EvalStatus::Timeout, el),
                        Err(SandboxError::Remote(w)) => {
                            uniform_outcomes(n, EvalStatus::RuleError { message: format!("{}: {}", w.kind, w.message) }, el)
                        }
                        Err(e) => uniform_outcomes(n, EvalStatus::RuleError { message: e.to_string() }, el),
                    };
                    (outcomes, Binding::External)
                }
            },
        };
        let failure = outcomes.iter().find_map(|o| match &o.status {
            EvalStatus::Ok { .. } => None,
            EvalStatus::RuleError { message } => Some(message.clone()),
            EvalStatus::Timeout => Some("timeout".into()),
        });
        let cost = task_cost(&outcomes, task).unwrap_or(WORST_COST);
        HeuristicEval { cost, outcomes, binding, failure }
    }
}

/// A candidate evaluated through `utility` during one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedCandidate {
    pub idea: String,
    pub code: String,
    pub cost: f64,
}

/// Scores `(code, idea)` for the run's subtask.
pub type UtilityFn<'a> = dyn Fn(&str, &str) -> Result<f64, CallbackError> + Sync + 'a;

/// Callback surface of one optimizer run over one population snapshot.
pub struct RunHost<'a> {
    subtask: String,
    members: Vec<Individual>,
    rng: Mutex<ChaCha8Rng>,
    utility_fn: &'a UtilityFn<'a>,
    store: &'a TranscriptStore,
    candidate_limit: usize,
    callback_budget: u32,
    callbacks: AtomicU32,
    utility_calls: Mutex<usize>,
    aborted: AtomicBool,
    llm_failure: Mutex<Option<LlmError>>,
    log: Mutex<Vec<EvaluatedCandidate>>,
}

impl<'a> RunHost<'a> {
    pub fn new(
        subtask: impl Into<String>,
        population: &Population,
        rng_seed: u64,
        utility_fn: &'a UtilityFn<'a>,
        store: &'a TranscriptStore,
        candidate_limit: usize,
        callback_budget: u32,
    ) -> Self {
        Self {
            subtask: subtask.into(),
            members: population.ranked().into_iter().cloned().collect(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(rng_seed)),
            utility_fn,
            store,
            candidate_limit,
            callback_budget,
            callbacks: AtomicU32::new(0),
            utility_calls: Mutex::new(0),
            aborted: AtomicBool::new(false),
            llm_failure: Mutex::new(None),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn subtask(&self) -> &str {
        &self.subtask
    }

    pub fn evaluated(&self) -> Vec<EvaluatedCandidate> {
        self.log.lock().unwrap().clone()
    }

    pub fn callbacks(&self) -> u32 {
        self.callbacks.load(Ordering::SeqCst)
    }

    pub fn aborted(&self) -> bool {
        self.aborted.load(Ordering::SeqCst)
    }

    /// The first gateway failure (transport, replay miss) seen by the run.
    /// Invalid requests made by the optimizer are not gateway failures.
    pub fn llm_failure(&self) -> Option<LlmError> {
        self.llm_failure.lock().unwrap().clone()
    }

    fn llm_error(&self, e: LlmError) -> CallbackError {
        let msg = e.to_string();
        if !matches!(e, LlmError::InvalidRequest(_)) {
            self.llm_failure.lock().unwrap().get_or_insert(e);
        }
        CallbackError::Llm(msg)
    }

    /// The cost on record for `code`: its best evaluation in this run, else
    /// its cost in the snapshot. Claimed costs are never trusted.
    pub fn verified_cost(&self, code: &str) -> Option<f64> {
        let logged = self.log.lock().unwrap().iter().filter(|c| c.code == code).map(|c| c.cost).reduce(f64::min);
        logged.or_else(|| self.members.iter().find(|m| m.code == code).map(|m| m.cost))
    }

    fn tick(&self) -> Result<(), CallbackError> {
        let n = self.callbacks.fetch_add(1, Ordering::SeqCst) + 1;
        if n > self.callback_budget {
            self.aborted.store(true, Ordering::SeqCst);
            return Err(CallbackError::CallbackBudget(format!("more than {} callbacks", self.callback_budget)));
        }
        Ok(())
    }

    fn check_subtask(&self, subtask: &str) -> Result<(), CallbackError> {
        if subtask == self.subtask {
            Ok(())
        } else {
            Err(CallbackError::Population(format!("unknown subtask `{subtask}`; this run optimizes `{}`", self.subtask)))
        }
    }

    fn view(m: &Individual) -> SolutionView {
        SolutionView { best_sol: m.code.clone(), idea: m.idea.clone(), utility: m.cost }
    }
}

impl OptimizerHost for RunHost<'_> {
    fn get_solution_by_index(&self, subtask: &str, index: usize) -> Result<SolutionView, CallbackError> {
        self.tick()?;
        self.check_subtask(subtask)?;
        self.members
            .get(index)
            .map(Self::view)
            .ok_or_else(|| CallbackError::Population(format!("rank {index} out of range for size {}", self.members.len())))
    }

    fn get_random_solution(&self, subtask: &str) -> Result<SolutionView, CallbackError> {
        self.tick()?;
        self.check_subtask(subtask)?;
        if self.members.is_empty() {
            return Err(CallbackError::Population("population is empty".into()));
        }
        let i = rand::Rng::random_range(&mut *self.rng.lock().unwrap(), 0..self.members.len());
        Ok(Self::view(&self.members[i]))
    }

    fn get_subtask_size(&self, subtask: &str) -> Result<usize, CallbackError> {
        self.tick()?;
        self.check_subtask(subtask)?;
        Ok(self.members.len())
    }

    fn utility(&self, code: &str, idea: &str, subtask: &str) -> Result<f64, CallbackError> {
        self.tick()?;
        self.check_subtask(subtask)?;
        {
            let mut n = self.utility_calls.lock().unwrap();
            if *n >= self.candidate_limit {
                return Err(CallbackError::CandidateLimit(format!("at most {} evaluations per run", self.candidate_limit)));
            }
            *n += 1;
        }
        let cost = (self.utility_fn)(code, idea)?;
        self.log.lock().unwrap().push(EvaluatedCandidate { idea: idea.to_string(), code: code.to_string(), cost });
        Ok(cost)
    }

    fn prompt(&self, expertise: &str, message: &str, temperature: f64) -> Result<String, CallbackError> {
        self.tick()?;
        let req = PromptRequest::new(expertise, message, temperature).map_err(|e| self.llm_error(e))?;
        self.store.prompt(&req).map_err(|e| self.llm_error(e))
    }

    fn prompt_batch(&self, expertise: &str, messages: &[String], temperature: f64) -> Result<Vec<String>, CallbackError> {
        self.tick()?;
        let reqs = messages
            .iter()
            .map(|m| PromptRequest::new(expertise, m.as_str(), temperature))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| self.llm_error(e))?;
        self.store.prompt_batch(&reqs).map_err(|e| self.llm_error(e))
    }

    fn candidate_limit(&self) -> usize {
        self.candidate_limit
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunFailure {
    #[error(transparent)]
    Callback(#[from] CallbackError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("code is not a built-in optimizer and no external worker is configured")]
    Unavailable,
}

impl RunFailure {
    pub fn is_budget_exhausted(&self) -> bool {
        match self {
            RunFailure::Callback(CallbackError::BudgetExhausted(_)) => true,
            RunFailure::Sandbox(SandboxError::Remote(w)) => w.kind == "budget_exhausted",
            _ => false,
        }
    }
}

/// Where external optimizer code runs. Each run gets a fresh worker, so a
/// run nested inside another run's callback never waits on a pool slot.
#[derive(Debug, Clone)]
pub struct OptimizerSandbox {
    pub command: WorkerCommand,
    pub limits: ResourceLimits,
}

/// Executes optimizer `code` against `host`.
pub fn run_optimizer_code(
    code: &str,
    subtask_prompt: &str,
    host: &RunHost<'_>,
    sandbox: Option<&OptimizerSandbox>,
) -> Result<OptimizerResult, RunFailure> {
    let out = match resolve_optimizer(code) {
        Some(spec) => spec.imp.optimize(host, subtask_prompt, host.subtask()).map_err(RunFailure::from),
        None => match sandbox {
            Some(sb) => spawn_worker(&sb.command, &sb.limits)
                .and_then(|mut h| h.run_optimizer(code, host.subtask(), subtask_prompt, host))
                .map_err(RunFailure::from),
            None => Err(RunFailure::Unavailable),
        },
    };
    if host.aborted() {
        if let Ok(_) | Err(RunFailure::Callback(_)) = out {
            return Err(RunFailure::Callback(CallbackError::CallbackBudget(format!(
                "more than {} callbacks",
                host.callback_budget
            ))));
        }
    }
    out
}
