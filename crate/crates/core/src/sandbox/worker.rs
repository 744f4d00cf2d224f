use std::io::{BufReader, BufWriter};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::{
    method, parity_hash, read_frame, write_frame, EnvelopeKind, Hello, RpcEnvelope, RunHeuristic, RunHeuristicResult,
    RunOptimizer, WireError, WireInstance, PROTOCOL_VERSION,
};
use super::{route_callback, ResourceLimits, SandboxError};
use crate::harnesses::EvalStatus;
use crate::instances::Instances;
use crate::llm::Semaphore;
use crate::optimizers::{OptimizerHost, OptimizerResult};
use crate::scoring::TaskSpec;

static SESSIONS: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl WorkerCommand {
    pub fn new(program: impl Into<String>, args: &[&str]) -> Self {
        Self { program: program.into(), args: args.iter().map(|s| s.to_string()).collect() }
    }
}

type Inbound = Result<RpcEnvelope, String>;

/// A live worker process. Call ids are prefixed by the session number, so
/// ids from a killed predecessor never match.
pub struct WorkerHandle {
    session: u64,
    child: Child,
    stdin: BufWriter<ChildStdin>,
    rx: Receiver<Inbound>,
    next_id: u64,
    hello: Hello,
    limits: ResourceLimits,
    poisoned: bool,
}

#[cfg(unix)]
fn limit_memory(cmd: &mut Command, bytes: u64) {
    use std::os::unix::process::CommandExt;
    // SAFETY: setrlimit is async-signal-safe and touches no shared state.
    unsafe {
        cmd.pre_exec(move || {
            let lim = libc::rlimit { rlim_cur: bytes as libc::rlim_t, rlim_max: bytes as libc::rlim_t };
            if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn limit_memory(_cmd: &mut Command, _bytes: u64) {}

pub fn spawn_worker(cmd: &WorkerCommand, limits: &ResourceLimits) -> Result<WorkerHandle, SandboxError> {
    limits.validate().map_err(SandboxError::Spawn)?;
    let mut command = Command::new(&cmd.program);
    command.args(&cmd.args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::inherit());
    limit_memory(&mut command, limits.memory_cap);
    let mut child = command.spawn().map_err(|e| SandboxError::Spawn(format!("{}: {e}", cmd.program)))?;
    let stdout = child.stdout.take().expect("piped");
    let stdin = BufWriter::new(child.stdin.take().expect("piped"));
    let (tx, rx) = mpsc::channel::<Inbound>();
    std::thread::spawn(move || {
        let mut r = BufReader::new(stdout);
        loop {
            match read_frame(&mut r) {
                Ok(Some(env)) => {
                    if tx.send(Ok(env)).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = tx.send(Err(e.to_string()));
                    break;
                }
            }
        }
    });
    let session = SESSIONS.fetch_add(1, Ordering::SeqCst);
    let mut h = WorkerHandle {
        session,
        child,
        stdin,
        rx,
        next_id: 0,
        hello: Hello { protocol_version: 0, parity_hash: String::new(), worker: String::new() },
        limits: limits.clone(),
        poisoned: false,
    };
    match h.handshake() {
        Ok(()) => Ok(h),
        Err(e) => {
            h.kill();
            Err(e)
        }
    }
}

impl WorkerHandle {
    fn handshake(&mut self) -> Result<(), SandboxError> {
        let wait = Duration::from_secs_f64(self.limits.handshake_timeout);
        let env = match self.rx.recv_timeout(wait) {
            Ok(Ok(env)) => env,
            Ok(Err(e)) => return Err(SandboxError::Handshake(format!("unreadable first frame: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(SandboxError::Handshake("no hello within the handshake timeout".into())),
            Err(RecvTimeoutError::Disconnected) => return Err(SandboxError::Handshake("worker exited before hello".into())),
        };
        if env.kind != EnvelopeKind::Call || env.method != method::HELLO {
            return Err(SandboxError::Handshake(format!("expected hello, got {:?} {}", env.kind, env.method)));
        }
        let hello: Hello =
            serde_json::from_value(env.payload.clone()).map_err(|e| SandboxError::Handshake(format!("bad hello: {e}")))?;
        if hello.protocol_version != PROTOCOL_VERSION {
            let err = WireError::new("protocol_error", format!("protocol version {PROTOCOL_VERSION} required"));
            let _ = write_frame(&mut self.stdin, &env.error(&err));
            return Err(SandboxError::Handshake(format!(
                "worker speaks protocol {}, orchestrator {PROTOCOL_VERSION}",
                hello.protocol_version
            )));
        }
        if hello.parity_hash != parity_hash() {
            let err = WireError::new("protocol_error", "harness parity hash mismatch");
            let _ = write_frame(&mut self.stdin, &env.error(&err));
            return Err(SandboxError::Handshake("harness parity hash mismatch".into()));
        }
        write_frame(&mut self.stdin, &env.reply(json!({"protocol_version": PROTOCOL_VERSION, "session": self.session})))
            .map_err(|e| SandboxError::Handshake(e.to_string()))?;
        self.hello = hello;
        Ok(())
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    pub fn is_healthy(&mut self) -> bool {
        !self.poisoned && matches!(self.child.try_wait(), Ok(None))
    }

    pub fn kill(&mut self) {
        self.poisoned = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn fail(&mut self, e: SandboxError) -> SandboxError {
        self.kill();
        e
    }

    fn exit_description(&mut self) -> String {
        match self.child.wait() {
            Ok(s) => s.to_string(),
            Err(e) => e.to_string(),
        }
    }

    /// Sends a call and services worker callbacks until the matching reply.
    pub fn call(
        &mut self,
        method_name: &str,
        payload: Value,
        timeout: Duration,
        host: Option<&dyn OptimizerHost>,
    ) -> Result<Value, SandboxError> {
        if self.poisoned {
            return Err(SandboxError::WorkerDied("handle was killed".into()));
        }
        self.next_id += 1;
        let id = format!("{}:{}", self.session, self.next_id);
        let deadline = Instant::now() + timeout;
        write_frame(&mut self.stdin, &RpcEnvelope::call(id.clone(), method_name, payload))
            .map_err(|e| SandboxError::WorkerDied(e.to_string()))
            .map_err(|e| self.fail(e))?;
        let mut callbacks = 0u32;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let env = match self.rx.recv_timeout(left) {
                Ok(Ok(env)) => env,
                Ok(Err(e)) => return Err(self.fail(SandboxError::Protocol(e))),
                Err(RecvTimeoutError::Timeout) => return Err(self.fail(SandboxError::Timeout(timeout.as_secs_f64()))),
                Err(RecvTimeoutError::Disconnected) => {
                    let status = self.exit_description();
                    return Err(self.fail(SandboxError::WorkerDied(status)));
                }
            };
            match env.kind {
                EnvelopeKind::Return | EnvelopeKind::Error if env.id == id => {
                    if env.kind == EnvelopeKind::Return {
                        return Ok(env.payload);
                    }
                    let err: WireError = serde_json::from_value(env.payload)
                        .unwrap_or_else(|e| WireError::new("protocol_error", format!("bad error payload: {e}")));
                    return Err(SandboxError::Remote(err));
                }
                EnvelopeKind::Call => {
                    let Some(host) = host else {
                        return Err(self.fail(SandboxError::Protocol(format!("unexpected callback `{}`", env.method))));
                    };
                    callbacks += 1;
                    if callbacks > self.limits.callback_budget {
                        let err = WireError::new("callback_budget", format!("more than {} callbacks", self.limits.callback_budget));
                        let _ = write_frame(&mut self.stdin, &env.error(&err));
                        return Err(self.fail(SandboxError::CallbackBudget(self.limits.callback_budget)));
                    }
                    let reply = match route_callback(&env, host) {
                        Ok(r) => r,
                        Err(e) => {
                            let _ = write_frame(&mut self.stdin, &env.error(&WireError::new("protocol_error", e.to_string())));
                            return Err(self.fail(SandboxError::Protocol(e.to_string())));
                        }
                    };
                    write_frame(&mut self.stdin, &reply)
                        .map_err(|e| SandboxError::WorkerDied(e.to_string()))
                        .map_err(|e| self.fail(e))?;
                }
                _ => return Err(self.fail(SandboxError::Protocol(format!("reply with unknown id {}", env.id)))),
            }
        }
    }

    /// Runs the task's harness over its dataset inside the worker.
    pub fn eval_heuristic(&mut self, task: &TaskSpec, code: &str) -> Result<Vec<EvalStatus>, SandboxError> {
        let instances = match &task.dataset.instances {
            Instances::Tsp(v) => v.iter().map(WireInstance::from_tsp).collect(),
            Instances::Bpp(v) => v.iter().map(WireInstance::from_bpp).collect(),
        };
        let rule_kind = task.kind.rule_kind();
        let payload = RunHeuristic {
            task_kind: task.kind,
            rule_kind,
            entry_symbol: rule_kind.entry_symbol().to_string(),
            code: code.to_string(),
            params: task.harness.clone(),
            instances,
        };
        let timeout = Duration::from_secs_f64(self.limits.wall_timeout);
        let v = self.call(method::RUN_HEURISTIC, json!(payload), timeout, None)?;
        let res: RunHeuristicResult =
            serde_json::from_value(v).map_err(|e| self.fail(SandboxError::Protocol(format!("bad run_heuristic result: {e}"))))?;
        if res.outcomes.len() != task.dataset.len() {
            return Err(self.fail(SandboxError::Protocol(format!(
                "{} outcomes for {} instances",
                res.outcomes.len(),
                task.dataset.len()
            ))));
        }
        Ok(res.outcomes)
    }

    /// Executes `optimize_algorithm` with `host` answering its callbacks.
    pub fn run_optimizer(
        &mut self,
        code: &str,
        subtask: &str,
        subtask_prompt: &str,
        host: &dyn OptimizerHost,
    ) -> Result<OptimizerResult, SandboxError> {
        let payload = RunOptimizer {
            code: code.to_string(),
            subtask: subtask.to_string(),
            subtask_prompt: subtask_prompt.to_string(),
            candidate_limit: host.candidate_limit(),
        };
        let timeout = Duration::from_secs_f64(self.limits.optimizer_timeout);
        let v = self.call(method::RUN_OPTIMIZER, json!(payload), timeout, Some(host))?;
        serde_json::from_value(v).map_err(|e| SandboxError::Protocol(format!("bad run_optimizer result: {e}")))
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Fixed-size pool; unhealthy workers are dropped and replaced on demand.
pub struct WorkerPool {
    command: WorkerCommand,
    limits: ResourceLimits,
    idle: Mutex<Vec<WorkerHandle>>,
    slots: Semaphore,
    size: usize,
}

impl WorkerPool {
    pub fn new(command: WorkerCommand, limits: ResourceLimits, size: usize) -> Self {
        let size = size.max(1);
        Self { command, limits, idle: Mutex::new(Vec::new()), slots: Semaphore::new(size), size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn limits(&self) -> &ResourceLimits {
        &self.limits
    }

    pub fn with_worker<T>(&self, f: impl FnOnce(&mut WorkerHandle) -> Result<T, SandboxError>) -> Result<T, SandboxError> {
        let _slot = self.slots.acquire();
        let mut pooled = None;
        while let Some(mut h) = self.idle.lock().unwrap().pop() {
            if h.is_healthy() {
                pooled = Some(h);
                break;
            }
        }
        let mut h = match pooled {
            Some(h) => h,
            None => spawn_worker(&self.command, &self.limits)?,
        };
        let out = f(&mut h);
        if h.is_healthy() {
            self.idle.lock().unwrap().push(h);
        }
        out
    }
}
