//! The `moh` command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
//! 3 language-model transport failure, 4 evaluation budget exhausted,
//! 130 stopped by an interrupt (the run is resumable).

pub mod baseline;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, OnceLock};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::executor::{Evaluator, OptimizerSandbox};
use crate::harnesses::references::{attach_references, ReferenceParams};
use crate::instances::{gen_bpp_dataset, gen_tsp_dataset, load_dataset, save_dataset};
use crate::llm::provider::api_key_from_env;
use crate::llm::{HttpProvider, LlmError, TranscriptMode, TranscriptStore};
use crate::metaloop::{Checkpoint, MetaLoop, MetaLoopError, StopReason};
use crate::sandbox::{WorkerCommand, WorkerPool};
use crate::scoring::{BudgetLedger, HarnessParams, TaskKind};

use baseline::{run_baseline, Baseline};
use config::{GenerateConfig, LlmConfig, RunConfig, SandboxConfig, TaskConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

/// Copy of the run configuration kept in the run directory.
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const INFER_DIR: &str = "infer";
pub const BEST_HEURISTIC_JSON: &str = "best_heuristic.json";
pub const BEST_HEURISTIC_PY: &str = "best_heuristic.py";
pub const INFER_REPORT: &str = "report.csv";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    fn failure(message: impl Into<String>) -> Self {
        Self::new(EXIT_FAILURE, message)
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let code = match e {
            LlmError::Config(_) | LlmError::Transcript(_) | LlmError::InvalidRequest(_) => EXIT_CONFIG,
            LlmError::Transport(_) | LlmError::ReplayMiss { .. } => EXIT_TRANSPORT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<MetaLoopError> for CliError {
    fn from(e: MetaLoopError) -> Self {
        match e {
            MetaLoopError::Config(_) => Self::config(e.to_string()),
            MetaLoopError::Llm(inner) => {
                let mut err = CliError::from(inner);
                err.message = format!("language model gateway: {}", err.message);
                err
            }
            MetaLoopError::Budget(_) => Self::new(EXIT_BUDGET, e.to_string()),
            MetaLoopError::Interrupted => Self::new(EXIT_INTERRUPTED, e.to_string()),
            MetaLoopError::TaskInit { .. } | MetaLoopError::Io(_) => Self::failure(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "moh", version, about = "Meta-optimization of combinatorial heuristics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an evaluation dataset with reference objectives.
    GenData(GenDataArgs),
    /// Run classic baselines over datasets.
    Baseline(BaselineArgs),
    /// Train (or resume training) from a config file.
    Train(TrainArgs),
    /// Apply a trained meta-optimizer to a new task.
    Infer(InferArgs),
    /// Print the per-iteration convergence series of a run.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Tsp,
    Bpp,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Cities per TSP instance or items per bin-packing instance.
    #[arg(long, visible_alias = "n")]
    pub size: usize,
    #[arg(long)]
    pub count: usize,
    /// Bin capacity (bin packing only).
    #[arg(long, default_value_t = 100)]
    pub capacity: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Round budget of the reference run for instances too large to solve exactly.
    #[arg(long)]
    pub ref_rounds: Option<u32>,
    /// Seconds per instance for the reference run.
    #[arg(long)]
    pub ref_time_cap: Option<f64>,
    /// Skip reference computation.
    #[arg(long)]
    pub no_references: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Dataset files written by gen-data.
    #[arg(long = "dataset", required = true, num_args = 1..)]
    pub datasets: Vec<PathBuf>,
    /// Methods to run; defaults to every method that fits each dataset.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Baseline>,
    /// Guided-search rounds for gls_identity.
    #[arg(long)]
    pub gls_rounds: Option<u32>,
    /// Also write the rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value = "infer")]
    pub task_id: String,
    #[arg(long, value_enum)]
    pub kind: TaskKind,
    /// Dataset file; otherwise one is generated from --size, --count and --seed.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Defaults to the configured inference iterations.
    #[arg(long)]
    pub iterations: Option<u32>,
    /// Evaluation budget of this inference run; defaults to the training limit.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, value_enum)]
    pub llm_mode: Option<TranscriptMode>,
    /// Defaults to the output directory's transcript.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Defaults to <run-dir>/infer/<task-id>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::failure(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<i32, CliError> {
    let mut ds = match a.kind {
        DataKind::Tsp => gen_tsp_dataset(a.size, a.count, a.seed),
        DataKind::Bpp => gen_bpp_dataset(a.size, a.capacity, a.count, a.seed),
    }
    .map_err(|e| CliError::config(e.to_string()))?;
    if !a.no_references {
        let mut params = ReferenceParams::default();
        if let Some(r) = a.ref_rounds {
            params.max_rounds = r;
        }
        if let Some(t) = a.ref_time_cap {
            params.time_cap = t;
        }
        attach_references(&mut ds, &params).map_err(|e| CliError::failure(e.to_string()))?;
    }
    save_dataset(&ds, &a.out).map_err(|e| CliError::failure(e.to_string()))?;
    println!("wrote {} instances to {} (seed: {})", ds.len(), a.out.display(), a.seed);
    Ok(EXIT_OK)
}

pub fn cmd_baseline(a: &BaselineArgs) -> Result<i32, CliError> {
    let mut harness = HarnessParams::default();
    if let Some(r) = a.gls_rounds {
        harness.gls.max_rounds = r;
        harness.gls.validate().map_err(CliError::config)?;
    }
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for path in &a.datasets {
        let ds = load_dataset(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if ds.is_empty() {
            return Err(CliError::config(format!("{}: dataset is empty", path.display())));
        }
        seeds.push(ds.provenance.seed);
        let methods: Vec<Baseline> = if a.methods.is_empty() {
            Baseline::defaults(ds.kind()).to_vec()
        } else {
            a.methods.iter().copied().filter(|m| Baseline::defaults(ds.kind()).contains(m)).collect()
        };
        if methods.is_empty() {
            return Err(CliError::config(format!("{}: none of the requested methods applies", path.display())));
        }
        for m in methods {
            rows.push(run_baseline(&ds, m, &harness).map_err(CliError::failure)?);
        }
    }
    print!("{}", baseline::to_table(&rows, &seeds));
    if let Some(p) = &a.csv {
        write_file(p, &baseline::to_csv(&rows, &seeds))?;
    }
    Ok(EXIT_OK)
}

fn build_store(llm: &LlmConfig, mode: TranscriptMode, transcript: &Path) -> Result<TranscriptStore, CliError> {
    let provider = || -> Result<Arc<HttpProvider>, CliError> {
        let key = api_key_from_env()?;
        Ok(Arc::new(HttpProvider::new(llm.endpoint.clone(), llm.model.clone(), key)?))
    };
    Ok(match mode {
        TranscriptMode::Live => TranscriptStore::live(provider()?, llm.concurrency),
        TranscriptMode::Record => {
            let p = provider()?;
            if let Some(dir) = transcript.parent() {
                fs::create_dir_all(dir).map_err(|e| CliError::failure(format!("{}: {e}", dir.display())))?;
            }
            TranscriptStore::record(p, transcript, llm.concurrency)?
        }
        TranscriptMode::Replay => {
            if !transcript.exists() {
                return Err(CliError::config(format!("replay transcript {} does not exist", transcript.display())));
            }
            TranscriptStore::replay_file(transcript)?
        }
    })
}

fn attach_sandbox(ml: MetaLoop, sandbox: &SandboxConfig) -> Result<MetaLoop, CliError> {
    let ml = ml.with_callback_budget(sandbox.limits.callback_budget);
    let Some((program, args)) = sandbox.worker.split_first() else {
        return Ok(ml);
    };
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let command = WorkerCommand::new(program.clone(), &args);
    let size = if sandbox.pool_size == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        sandbox.pool_size
    };
    let pool = Arc::new(WorkerPool::new(command.clone(), sandbox.limits.clone(), size));
    Ok(ml
        .with_evaluator(Evaluator::with_workers(pool))
        .with_optimizer_sandbox(OptimizerSandbox { command, limits: sandbox.limits.clone() }))
}

/// One process-wide flag set by SIGINT; a second SIGINT exits immediately.
fn interrupt_flag() -> Arc<AtomicBool> {
    static FLAG: OnceLock<Arc<AtomicBool>> = OnceLock::new();
    FLAG.get_or_init(|| {
        let flag = Arc::new(AtomicBool::new(false));
        let presses = AtomicU32::new(0);
        let f = flag.clone();
        let installed = ctrlc::set_handler(move || {
            if presses.fetch_add(1, Ordering::SeqCst) > 0 {
                std::process::exit(EXIT_INTERRUPTED);
            }
            eprintln!("interrupt received; finishing the current step and writing a checkpoint");
            f.store(true, Ordering::SeqCst);
        });
        if let Err(e) = installed {
            log::warn!("SIGINT handler not installed: {e}");
        }
        flag
    })
    .clone()
}

fn snapshot(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.out_dir.join(CONFIG_SNAPSHOT);
    let text = toml::to_string_pretty(cfg).map_err(|e| CliError::failure(format!("config snapshot: {e}")))?;
    if path.exists() {
        let old = fs::read_to_string(&path).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
        let old: RunConfig = toml::from_str(&old).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if &old != cfg {
            return Err(CliError::config(format!(
                "{} holds a run with a different configuration; choose another out_dir",
                cfg.out_dir.display()
            )));
        }
        return Ok(());
    }
    write_file(&path, &text)
}

fn stop_code(reason: Option<StopReason>) -> i32 {
    match reason {
        Some(StopReason::BudgetExhausted) => EXIT_BUDGET,
        Some(StopReason::Interrupted) => EXIT_INTERRUPTED,
        _ => EXIT_OK,
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<i32, CliError> {
    let cfg = RunConfig::load(&a.config).map_err(CliError::config)?;
    let tasks = cfg.build_tasks().map_err(CliError::config)?;
    let store = Arc::new(build_store(&cfg.llm, cfg.llm.mode, &cfg.transcript_path())?);
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::failure(format!("{}: {e}", cfg.out_dir.display())))?;
    snapshot(&cfg)?;
    let ml = MetaLoop::new(cfg.metaloop.clone(), tasks, BudgetLedger::new(cfg.budget.limit), store)?
        .with_interrupt(interrupt_flag());
    let mut ml = attach_sandbox(ml, &cfg.sandbox)?.with_run_dir(&cfg.out_dir)?;
    let state = if Checkpoint::path(&cfg.out_dir).exists() {
        let ck = Checkpoint::load(&cfg.out_dir).map_err(CliError::failure)?;
        log::info!("resuming {} after iteration {}", cfg.out_dir.display(), ck.iteration);
        ml.resume(&ck)?
    } else {
        ml.initialize()?
    };
    let state = ml.train(state)?;
    println!("seed: {}", cfg.metaloop.seed);
    println!(
        "iterations: {}/{}  evaluations: {}/{}  stop: {:?}",
        state.iteration,
        cfg.metaloop.iterations,
        ml.budget().used(),
        ml.budget().limit(),
        state.stop_reason
    );
    println!("meta-optimizer {} cost {:.6}", state.meta_optimizer.id, state.meta_optimizer.cost);
    for (task, best) in state.best_heuristics() {
        println!("{task}: best {} cost {:.6}", best.id, best.cost);
    }
    if state.stop_reason == Some(StopReason::Interrupted) {
        eprintln!("run stopped; rerun the same command to resume");
    }
    Ok(stop_code(state.stop_reason))
}

fn load_run(run_dir: &Path) -> Result<(RunConfig, Checkpoint), CliError> {
    let snap = run_dir.join(CONFIG_SNAPSHOT);
    if !snap.exists() || !Checkpoint::path(run_dir).exists() {
        return Err(CliError::config(format!("{} is not a training run directory", run_dir.display())));
    }
    let cfg = RunConfig::load(&snap).map_err(CliError::config)?;
    let ck = Checkpoint::load(run_dir).map_err(CliError::failure)?;
    Ok((cfg, ck))
}

pub fn cmd_infer(a: &InferArgs) -> Result<i32, CliError> {
    let (cfg, ck) = load_run(&a.run_dir)?;
    let harness = cfg.tasks.iter().find(|t| t.kind == a.kind).map(|t| t.harness.clone()).unwrap_or_default();
    let generate = match (&a.dataset, a.size) {
        (Some(_), _) => None,
        (None, Some(size)) => Some(GenerateConfig { size, count: a.count, seed: a.seed, capacity: a.capacity }),
        (None, None) => return Err(CliError::config("give --dataset or --size")),
    };
    let task_cfg = TaskConfig {
        id: a.task_id.clone(),
        kind: a.kind,
        weight: 1.0,
        dataset: a.dataset.clone(),
        generate,
        harness,
    };
    let task = task_cfg.build().map_err(CliError::config)?;
    let out = a.out.clone().unwrap_or_else(|| a.run_dir.join(INFER_DIR).join(&a.task_id));
    fs::create_dir_all(&out).map_err(|e| CliError::failure(format!("{}: {e}", out.display())))?;
    let mode = a.llm_mode.unwrap_or(cfg.llm.mode);
    let transcript = a.transcript.clone().unwrap_or_else(|| crate::llm::transcript_path(&out));
    let store = Arc::new(build_store(&cfg.llm, mode, &transcript)?);
    let budget = BudgetLedger::new(a.budget.unwrap_or(cfg.budget.limit));
    let ml = MetaLoop::new(cfg.metaloop.clone(), vec![task.clone()], budget, store)?.with_interrupt(interrupt_flag());
    let ml = attach_sandbox(ml, &cfg.sandbox)?;

    let trained = ck.state().best_heuristics();
    let same_kind: std::collections::BTreeMap<_, _> = trained
        .iter()
        .filter(|(id, _)| cfg.tasks.iter().any(|t| &t.id == *id && t.kind == a.kind))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let shown = if same_kind.is_empty() { trained } else { same_kind };
    let iterations = a.iterations.unwrap_or(cfg.metaloop.inference_iterations);
    let outcome = ml.infer(&ck.meta_optimizer, &shown, &task, iterations)?;
    ml.store().flush()?;

    let best = serde_json::to_string_pretty(&outcome.best).expect("serializable") + "\n";
    write_file(&out.join(BEST_HEURISTIC_JSON), &best)?;
    write_file(&out.join(BEST_HEURISTIC_PY), &outcome.best.code)?;
    let mut csv = format!("# seed: {}\ntask,iteration,best_cost\n", cfg.metaloop.seed);
    for (r, c) in outcome.history.iter().enumerate() {
        csv.push_str(&format!("{},{r},{c}\n", a.task_id));
    }
    write_file(&out.join(INFER_REPORT), &csv)?;
    println!("seed: {}", cfg.metaloop.seed);
    println!(
        "{}: best {} cost {:.6} after {} rounds, {} evaluations; written to {}",
        a.task_id,
        outcome.best.id,
        outcome.best.cost,
        outcome.history.len() - 1,
        ml.budget().used(),
        out.display()
    );
    Ok(stop_code(Some(outcome.stop_reason)))
}

pub fn cmd_report(a: &ReportArgs) -> Result<i32, CliError> {
    if !a.run_dir.is_dir() {
        return Err(CliError::config(format!("{} is not a directory", a.run_dir.display())));
    }
    let snap = a.run_dir.join(CONFIG_SNAPSHOT);
    if !snap.exists() {
        return Err(CliError::config(format!("{} is not a training run directory", a.run_dir.display())));
    }
    let cfg = RunConfig::load(&snap).map_err(CliError::config)?;
    let rep = report::build_report(&a.run_dir, cfg.metaloop.seed).map_err(CliError::config)?;
    let text = match a.format {
        ReportFormat::Csv => rep.to_csv(),
        ReportFormat::Json => rep.to_json(),
    };
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
