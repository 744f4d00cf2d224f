//! The two nested searches: optimizers evolve heuristics per task, and the
//! best optimizer so far evolves new optimizers.

mod config;
mod state;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use config::MetaLoopConfig;
pub use state::{
    read_jsonl, AuditRecord, Checkpoint, MetricsRecord, Phase, RunState, StopReason, TimingRecord, AUDIT_FILE, BEST_FILE,
    CHECKPOINT_FILE, METRICS_FILE, TIMINGS_FILE,
};

use crate::executor::{run_optimizer_code, Evaluator, OptimizerSandbox, RunHost};
use crate::llm::{extract_code, extract_idea, extract_json_insights, extract_json_list, LlmError, PromptRequest, TranscriptStore};
use crate::optimizers::prompts::{self, INFERENCE_EXPERTISE, INIT_EXPERTISE, OPTIMIZER_DESIGN, OPTIMIZER_SUBTASK};
use crate::optimizers::{seed_optimizer, CallbackError};
use crate::population::{Individual, Origin, Population};
use crate::rng::derive_seed;
use crate::scoring::{aggregate_optimizer_utility, uniform_weights, BudgetExhausted, BudgetLedger, TaskSpec, WORST_COST};

const DIRECTION_ATTEMPTS: usize = 3;
const OUTER: u64 = 0x6f75_7465_72;

#[derive(Debug, Error)]
pub enum MetaLoopError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task {task}: {reason}")]
    TaskInit { task: String, reason: String },
    #[error(transparent)]
    Budget(#[from] BudgetExhausted),
    #[error("language model gateway: {0}")]
    Llm(#[from] LlmError),
    #[error("run directory: {0}")]
    Io(String),
    #[error("interrupted")]
    Interrupted,
}

/// Why an optimizer run stopped the surrounding loop.
#[derive(Debug, Clone, PartialEq)]
enum Halt {
    Budget,
    Interrupted,
    Llm(LlmError),
}

impl Halt {
    fn as_callback(&self) -> CallbackError {
        match self {
            Halt::Budget => CallbackError::BudgetExhausted("evaluation budget exhausted".into()),
            Halt::Interrupted => CallbackError::Interrupted("stop requested".into()),
            Halt::Llm(e) => CallbackError::Llm(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> MetaLoopError {
    MetaLoopError::Io(format!("{}: {e}", path.display()))
}

struct RunFiles {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timings: BufWriter<File>,
    audit: BufWriter<File>,
}

impl RunFiles {
    fn open(dir: &Path) -> Result<Self, MetaLoopError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            OpenOptions::new().create(true).append(true).open(&p).map(BufWriter::new).map_err(|e| io_err(&p, e))
        };
        Ok(Self { dir: dir.to_path_buf(), metrics: open(METRICS_FILE)?, timings: open(TIMINGS_FILE)?, audit: open(AUDIT_FILE)? })
    }
}

fn write_line<T: Serialize>(w: &mut BufWriter<File>, v: &T) -> std::io::Result<()> {
    writeln!(w, "{}", serde_json::to_string(v).map_err(std::io::Error::other)?)?;
    w.flush()
}

/// Result of running the trained meta-optimizer on a new task.
#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub best: Individual,
    pub population: Population,
    /// Best cost after initialization, then after each round.
    pub history: Vec<f64>,
    pub stop_reason: StopReason,
}

pub struct MetaLoop {
    config: MetaLoopConfig,
    tasks: Vec<TaskSpec>,
    weights: BTreeMap<String, f64>,
    budget: BudgetLedger,
    store: Arc<TranscriptStore>,
    evaluator: Evaluator,
    sandbox: Option<OptimizerSandbox>,
    callback_budget: u32,
    interrupt: Arc<AtomicBool>,
    files: Option<Mutex<RunFiles>>,
    audit_seq: AtomicU64,
    started: Instant,
}

impl MetaLoop {
    pub fn new(
        config: MetaLoopConfig,
        tasks: Vec<TaskSpec>,
        budget: BudgetLedger,
        store: Arc<TranscriptStore>,
    ) -> Result<Self, MetaLoopError> {
        config.validate(tasks.len(), budget.limit()).map_err(MetaLoopError::Config)?;
        let mut seen = HashSet::new();
        if let Some(t) = tasks.iter().find(|t| !seen.insert(t.task_id.clone())) {
            return Err(MetaLoopError::Config(format!("duplicate task id {}", t.task_id)));
        }
        let total: f64 = tasks.iter().map(|t| t.weight).sum();
        let weights = if tasks.iter().all(|t| t.weight == 1.0) {
            uniform_weights(tasks.iter().map(|t| t.task_id.as_str()))
        } else {
            tasks.iter().map(|t| (t.task_id.clone(), t.weight / total)).collect()
        };
        Ok(Self {
            config,
            tasks,
            weights,
            budget,
            store,
            evaluator: Evaluator::native_only(),
            sandbox: None,
            callback_budget: crate::sandbox::ResourceLimits::default().callback_budget,
            interrupt: Arc::new(AtomicBool::new(false)),
            files: None,
            audit_seq: AtomicU64::new(0),
            started: Instant::now(),
        })
    }

    pub fn with_evaluator(mut self, evaluator: Evaluator) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn with_optimizer_sandbox(mut self, sandbox: OptimizerSandbox) -> Self {
        self.sandbox = Some(sandbox);
        self
    }

    pub fn with_callback_budget(mut self, n: u32) -> Self {
        self.callback_budget = n;
        self
    }

    pub fn with_interrupt(mut self, flag: Arc<AtomicBool>) -> Self {
        self.interrupt = flag;
        self
    }

    /// Appends metrics, timings and audit records under `dir` and writes a
    /// checkpoint after every iteration.
    pub fn with_run_dir(mut self, dir: &Path) -> Result<Self, MetaLoopError> {
        self.files = Some(Mutex::new(RunFiles::open(dir)?));
        Ok(self)
    }

    pub fn config(&self) -> &MetaLoopConfig {
        &self.config
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn budget(&self) -> &BudgetLedger {
        &self.budget
    }

    pub fn store(&self) -> &TranscriptStore {
        &self.store
    }

    /// Charged evaluations recorded in the audit log.
    pub fn audit_total(&self) -> u64 {
        self.audit_seq.load(Ordering::SeqCst)
    }

    /// Restores budget, transcript position and audit numbering from a
    /// checkpoint and returns the saved state.
    pub fn resume(&mut self, ck: &Checkpoint) -> Result<RunState, MetaLoopError> {
        let want: BTreeSet<&String> = self.tasks.iter().map(|t| &t.task_id).collect();
        let have: BTreeSet<&String> = ck.heuristic_pops.keys().collect();
        if want != have {
            return Err(MetaLoopError::Config("checkpoint tasks differ from the configured tasks".into()));
        }
        self.budget = BudgetLedger::from_snapshot(&ck.budget);
        self.store.restore(&ck.transcript_cursor, ck.usage);
        self.audit_seq.store(ck.audit_seq, Ordering::SeqCst);
        Ok(ck.state())
    }

    pub fn checkpoint(&self, state: &RunState) -> Checkpoint {
        Checkpoint {
            iteration: state.iteration,
            meta_optimizer: state.meta_optimizer.clone(),
            optimizer_pop: state.optimizer_pop.snapshot(),
            heuristic_pops: state.heuristic_pops.iter().map(|(k, v)| (k.clone(), v.snapshot())).collect(),
            metrics: state.metrics.clone(),
            stop_reason: state.stop_reason,
            seed_evaluated: state.seed_evaluated,
            budget: self.budget.snapshot(),
            transcript_cursor: self.store.cursor(),
            usage: self.store.counters(),
            audit_seq: self.audit_total(),
        }
    }

    fn interrupted(&self) -> bool {
        self.interrupt.load(Ordering::SeqCst)
    }

    /// Charges one unit, evaluates and audits.
    fn charged_eval(&self, task: &TaskSpec, code: &str, phase: Phase, iteration: u32) -> Result<f64, BudgetExhausted> {
        self.budget.charge(&task.task_id, 1)?;
        let ev = self.evaluator.evaluate(task, code);
        if let Some(f) = &ev.failure {
            log::debug!("{}: candidate failed: {f}", task.task_id);
        }
        let seq = self.audit_seq.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(files) = &self.files {
            let rec = AuditRecord {
                seq,
                phase,
                iteration,
                task: task.task_id.clone(),
                code_id: crate::population::code_id(code),
                cost: ev.cost,
            };
            let mut f = files.lock().unwrap();
            if let Err(e) = write_line(&mut f.audit, &rec) {
                log::error!("audit log: {e}");
            }
        }
        Ok(ev.cost)
    }

    fn requests(&self, expertise: &str, messages: &[String]) -> Result<Vec<PromptRequest>, MetaLoopError> {
        messages.iter().map(|m| PromptRequest::new(expertise, m.as_str(), self.config.temperature).map_err(Into::into)).collect()
    }

    /// Asks for a JSON list under `key`, retrying on unusable replies.
    fn ask_list(&self, expertise: &str, message: &str, key: &str) -> Result<Option<Vec<String>>, MetaLoopError> {
        let req = PromptRequest::new(expertise, message, self.config.temperature)?;
        for _ in 0..DIRECTION_ATTEMPTS {
            let reply = self.store.prompt(&req)?;
            let parsed = if key == "insights" { extract_json_insights(&reply) } else { extract_json_list(&reply, key) };
            match parsed {
                Ok(v) if !v.is_empty() => return Ok(Some(v)),
                Ok(_) => log::warn!("empty `{key}` list"),
                Err(e) => log::warn!("unusable `{key}` reply: {e}"),
            }
        }
        Ok(None)
    }

    /// Requests one candidate per direction, evaluates each and keeps the
    /// successes. Fails if no candidate succeeds.
    fn populate(
        &self,
        task: &TaskSpec,
        directions: Vec<Option<String>>,
        phase: Phase,
        source: &str,
    ) -> Result<Population, MetaLoopError> {
        let mut pop = Population::new(task.task_id.clone(), self.config.heuristic_capacity);
        let messages: Vec<String> =
            directions.iter().map(|d| prompts::code_by_idea(task.kind, task.size, d.as_deref())).collect();
        let responses = self.store.prompt_batch(&self.requests(INIT_EXPERTISE, &messages)?)?;
        let mut failures = Vec::new();
        for (response, direction) in responses.iter().zip(&directions) {
            let code = match extract_code(response) {
                Ok(c) => c,
                Err(e) => {
                    failures.push(e.to_string());
                    continue;
                }
            };
            let idea = extract_idea(response);
            let idea = if idea.missing { direction.clone().unwrap_or_default() } else { idea.text };
            let cost = self.charged_eval(task, &code, phase, 0)?;
            if cost >= WORST_COST {
                failures.push(format!("candidate {} failed evaluation", crate::population::code_id(&code)));
                continue;
            }
            let origin = Origin { iteration: 0, parents: Vec::new(), source: source.into() };
            if let Ok(ind) = Individual::new(idea, code, cost, origin) {
                pop.insert(ind);
            }
        }
        for f in &failures {
            log::info!("{}: {f}", task.task_id);
        }
        if pop.is_empty() {
            return Err(MetaLoopError::TaskInit {
                task: task.task_id.clone(),
                reason: format!("all {} initial candidates failed ({})", responses.len(), failures.join("; ")),
            });
        }
        Ok(pop)
    }

    fn init_directions(&self, task: &TaskSpec) -> Result<Vec<Option<String>>, MetaLoopError> {
        let cap = self.config.heuristic_capacity;
        if !self.config.idea_generation_enabled {
            return Ok(vec![None; cap]);
        }
        let prompt = prompts::init_directions(task.kind, task.size);
        Ok(match self.ask_list(INIT_EXPERTISE, &prompt, "direction")? {
            Some(mut d) => {
                d.truncate(cap);
                d.into_iter().map(Some).collect()
            }
            None => vec![None],
        })
    }

    pub fn init_heuristic_populations(&self) -> Result<BTreeMap<String, Population>, MetaLoopError> {
        let mut out = BTreeMap::new();
        for task in &self.tasks {
            if self.interrupted() {
                return Err(MetaLoopError::Interrupted);
            }
            let directions = self.init_directions(task)?;
            out.insert(task.task_id.clone(), self.populate(task, directions, Phase::Init, "init")?);
        }
        Ok(out)
    }

    /// Runs optimizer `code` on one task population and inserts every
    /// successful heuristic it evaluated. Returns the task cost credited to
    /// the optimizer: the recorded cost of the heuristic it returned.
    #[allow(clippy::too_many_arguments)]
    fn run_on_task(
        &self,
        code: &str,
        parent: &str,
        task: &TaskSpec,
        pop: &mut Population,
        phase: Phase,
        iteration: u32,
        stream: &[u64],
    ) -> Result<f64, Halt> {
        if self.interrupted() {
            return Err(Halt::Interrupted);
        }
        let exhausted = AtomicBool::new(false);
        let util = |c: &str, _idea: &str| {
            self.charged_eval(task, c, phase, iteration).map_err(|e| {
                exhausted.store(true, Ordering::SeqCst);
                CallbackError::BudgetExhausted(e.to_string())
            })
        };
        let mut path = vec![phase.tag(), iteration as u64];
        path.extend_from_slice(stream);
        let host = RunHost::new(
            task.task_id.clone(),
            pop,
            derive_seed(self.config.seed, &path),
            &util,
            &self.store,
            self.config.heuristics_per_task,
            self.callback_budget,
        );
        let res = run_optimizer_code(code, &prompts::subtask_prompt(task.kind, task.size), &host, self.sandbox.as_ref());
        for c in host.evaluated() {
            if c.cost >= WORST_COST {
                continue;
            }
            let origin = Origin { iteration, parents: vec![parent.to_string()], source: "optimizer".into() };
            if let Ok(ind) = Individual::new(c.idea, c.code, c.cost, origin) {
                pop.insert(ind);
            }
        }
        if let Some(e) = host.llm_failure() {
            return Err(Halt::Llm(e));
        }
        if exhausted.load(Ordering::SeqCst) {
            return Err(Halt::Budget);
        }
        Ok(match res {
            Ok(r) => host.verified_cost(&r.code).unwrap_or(WORST_COST).min(WORST_COST),
            Err(e) => {
                log::info!("{}: optimizer {parent} failed: {e}", task.task_id);
                WORST_COST
            }
        })
    }

    /// Scores an optimizer by running it on every task; lower is better.
    fn inner_loop(
        &self,
        code: &str,
        parent: &str,
        pops: &mut BTreeMap<String, Population>,
        phase: Phase,
        iteration: u32,
        candidate: u64,
    ) -> Result<f64, Halt> {
        let mut costs = BTreeMap::new();
        for (ti, task) in self.tasks.iter().enumerate() {
            let pop = pops.get_mut(&task.task_id).expect("population per task");
            let c = self.run_on_task(code, parent, task, pop, phase, iteration, &[candidate, ti as u64])?;
            costs.insert(task.task_id.clone(), c);
        }
        Ok(-aggregate_optimizer_utility(&costs, &self.weights).expect("weights cover all tasks"))
    }

    /// Seeds the optimizer population with the shipped seed optimizer.
    pub fn init_optimizer_population(
        &self,
        pops: &mut BTreeMap<String, Population>,
    ) -> Result<(Population, bool), MetaLoopError> {
        let spec = seed_optimizer();
        let mut cost = WORST_COST;
        if self.config.evaluate_seed_optimizer {
            let id = crate::population::code_id(spec.source);
            cost = match self.inner_loop(spec.source, &id, pops, Phase::Init, 0, 0) {
                Ok(c) => c,
                Err(Halt::Budget) => return Err(MetaLoopError::Budget(self.exhausted_error())),
                Err(Halt::Interrupted) => return Err(MetaLoopError::Interrupted),
                Err(Halt::Llm(e)) => return Err(MetaLoopError::Llm(e)),
            };
        }
        let mut pop = Population::new(OPTIMIZER_SUBTASK, self.config.optimizer_capacity);
        let origin = Origin { iteration: 0, parents: Vec::new(), source: "seed".into() };
        pop.insert(Individual::new(spec.idea, spec.source, cost, origin).expect("seed source is valid"));
        Ok((pop, self.config.evaluate_seed_optimizer))
    }

    fn exhausted_error(&self) -> BudgetExhausted {
        BudgetExhausted { limit: self.budget.limit(), used: self.budget.used(), requested: 1 }
    }

    /// Builds both populations and records iteration 0.
    pub fn initialize(&self) -> Result<RunState, MetaLoopError> {
        let t0 = Instant::now();
        let mut pops = self.init_heuristic_populations()?;
        let (optimizer_pop, seed_evaluated) = self.init_optimizer_population(&mut pops)?;
        let meta_optimizer = optimizer_pop.best().expect("seed present").clone();
        let mut state = RunState {
            iteration: 0,
            meta_optimizer,
            optimizer_pop,
            heuristic_pops: pops,
            metrics: Vec::new(),
            stop_reason: None,
            seed_evaluated,
        };
        self.record(&mut state, 0, t0)?;
        Ok(state)
    }

    fn metrics_for(&self, state: &RunState, candidates: usize) -> MetricsRecord {
        let usage = self.store.counters();
        MetricsRecord {
            iteration: state.iteration,
            meta_id: state.meta_optimizer.id.clone(),
            meta_cost: state.meta_optimizer.cost,
            task_best: state.heuristic_pops.iter().filter_map(|(k, p)| p.best().map(|b| (k.clone(), b.cost))).collect(),
            optimizer_pop_size: state.optimizer_pop.size(),
            candidates_evaluated: candidates,
            evals_used: self.budget.used(),
            llm_requests: usage.requests,
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
            stop_reason: state.stop_reason,
        }
    }

    /// Appends metrics and timings and writes the checkpoint.
    fn record(&self, state: &mut RunState, candidates: usize, t0: Instant) -> Result<(), MetaLoopError> {
        let m = self.metrics_for(state, candidates);
        state.metrics.push(m.clone());
        if let Some(files) = &self.files {
            let mut f = files.lock().unwrap();
            let timing =
                TimingRecord { iteration: state.iteration, elapsed_s: t0.elapsed().as_secs_f64(), total_s: self.started.elapsed().as_secs_f64() };
            let dir = f.dir.clone();
            write_line(&mut f.metrics, &m).map_err(|e| io_err(&dir, e))?;
            write_line(&mut f.timings, &timing).map_err(|e| io_err(&dir, e))?;
            self.checkpoint(state).save(&dir).map_err(|e| io_err(&dir, e))?;
            let best = serde_json::to_vec_pretty(&state.best_heuristics()).expect("serializable");
            fs::write(dir.join(BEST_FILE), best).map_err(|e| io_err(&dir, e))?;
        }
        self.store.flush()?;
        Ok(())
    }

    /// One outer iteration: the meta-optimizer proposes up to M optimizers,
    /// each scored by an inner loop over all tasks.
    fn iterate(&self, state: &mut RunState, t: u32) -> Result<(usize, Option<Halt>), MetaLoopError> {
        let meta = state.meta_optimizer.clone();
        let pops = Mutex::new(std::mem::take(&mut state.heuristic_pops));
        let halt: Mutex<Option<Halt>> = Mutex::new(None);
        let next = AtomicU64::new(0);
        let opt_util = |code: &str, _idea: &str| -> Result<f64, CallbackError> {
            if let Some(h) = halt.lock().unwrap().as_ref() {
                return Err(h.as_callback());
            }
            if self.interrupted() {
                *halt.lock().unwrap() = Some(Halt::Interrupted);
                return Err(Halt::Interrupted.as_callback());
            }
            let candidate = next.fetch_add(1, Ordering::SeqCst);
            let id = crate::population::code_id(code);
            match self.inner_loop(code, &id, &mut pops.lock().unwrap(), Phase::Train, t, candidate + 1) {
                Ok(c) => Ok(c),
                Err(h) => {
                    let e = h.as_callback();
                    *halt.lock().unwrap() = Some(h);
                    Err(e)
                }
            }
        };
        let host = RunHost::new(
            OPTIMIZER_SUBTASK,
            &state.optimizer_pop,
            derive_seed(self.config.seed, &[OUTER, t as u64]),
            &opt_util,
            &self.store,
            self.config.candidates,
            self.callback_budget,
        );
        let res = run_optimizer_code(&meta.code, OPTIMIZER_DESIGN, &host, self.sandbox.as_ref());
        let evaluated = host.evaluated();
        let llm_failure = host.llm_failure();
        drop(host);
        state.heuristic_pops = pops.into_inner().unwrap();
        for c in &evaluated {
            if c.cost >= WORST_COST {
                continue;
            }
            let origin = Origin { iteration: t, parents: vec![meta.id.clone()], source: "meta".into() };
            if let Ok(ind) = Individual::new(c.idea.clone(), c.code.clone(), c.cost, origin) {
                state.optimizer_pop.insert(ind);
            }
        }
        if let Err(e) = &res {
            log::info!("iteration {t}: meta-optimizer run failed: {e}");
        }
        state.meta_optimizer = state.optimizer_pop.best().expect("non-empty").clone();
        let halt = halt.into_inner().unwrap().or(llm_failure.map(Halt::Llm));
        Ok((evaluated.len(), halt))
    }

    /// Runs outer iterations until `config.iterations` are complete, the
    /// budget runs out or a stop is requested.
    pub fn train(&self, mut state: RunState) -> Result<RunState, MetaLoopError> {
        if matches!(state.stop_reason, Some(StopReason::Completed | StopReason::BudgetExhausted)) {
            return Ok(state);
        }
        state.stop_reason = None;
        while state.iteration < self.config.iterations {
            let t0 = Instant::now();
            if self.interrupted() {
                state.stop_reason = Some(StopReason::Interrupted);
                self.record(&mut state, 0, t0)?;
                return Ok(state);
            }
            if self.budget.is_exhausted() {
                state.stop_reason = Some(StopReason::BudgetExhausted);
                self.record(&mut state, 0, t0)?;
                return Ok(state);
            }
            let t = state.iteration + 1;
            let (n, halt) = self.iterate(&mut state, t)?;
            state.iteration = t;
            match halt {
                None => {
                    if t == self.config.iterations {
                        state.stop_reason = Some(StopReason::Completed);
                    }
                    self.record(&mut state, n, t0)?;
                }
                Some(Halt::Budget) => {
                    state.stop_reason = Some(StopReason::BudgetExhausted);
                    self.record(&mut state, n, t0)?;
                    return Ok(state);
                }
                Some(Halt::Interrupted) => {
                    state.stop_reason = Some(StopReason::Interrupted);
                    self.record(&mut state, n, t0)?;
                    return Ok(state);
                }
                Some(Halt::Llm(e)) => {
                    self.record(&mut state, n, t0)?;
                    return Err(MetaLoopError::Llm(e));
                }
            }
        }
        Ok(state)
    }

    /// Initializes a population for `task` from insights into the trained
    /// heuristics, then applies `meta` to it for `iterations` rounds.
    pub fn infer(
        &self,
        meta: &Individual,
        trained: &BTreeMap<String, Individual>,
        task: &TaskSpec,
        iterations: u32,
    ) -> Result<InferOutcome, MetaLoopError> {
        let related: Vec<&Individual> = trained
            .iter()
            .filter(|(id, _)| self.tasks.iter().any(|t| &t.task_id == *id && t.kind == task.kind))
            .map(|(_, i)| i)
            .collect();
        let shown: Vec<&Individual> = if related.is_empty() { trained.values().collect() } else { related };
        let solutions = shown.iter().map(|i| format!("```python\n{}\n```", i.code.trim_end())).collect::<Vec<_>>().join("\n");
        let prompt = prompts::inference_insights(task.kind, task.size, &solutions);
        let directions = match self.ask_list(INFERENCE_EXPERTISE, &prompt, "insights")? {
            Some(mut v) => {
                v.truncate(self.config.heuristic_capacity);
                v.into_iter().map(Some).collect()
            }
            None => vec![None],
        };
        let mut pop = self.populate(task, directions, Phase::Infer, "inference")?;
        let mut history = vec![pop.best().expect("non-empty").cost];
        let mut stop_reason = StopReason::Completed;
        for r in 1..=iterations {
            match self.run_on_task(&meta.code, &meta.id, task, &mut pop, Phase::Infer, r, &[]) {
                Ok(_) => {}
                Err(Halt::Budget) => {
                    stop_reason = StopReason::BudgetExhausted;
                    history.push(pop.best().expect("non-empty").cost);
                    break;
                }
                Err(Halt::Interrupted) => {
                    stop_reason = StopReason::Interrupted;
                    break;
                }
                Err(Halt::Llm(e)) => return Err(MetaLoopError::Llm(e)),
            }
            history.push(pop.best().expect("non-empty").cost);
        }
        Ok(InferOutcome { best: pop.best().expect("non-empty").clone(), population: pop, history, stop_reason })
    }
}

#[cfg(test)]
mod tests;
