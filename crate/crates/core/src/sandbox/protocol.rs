//! Wire format: each frame is a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON encoding one [`RpcEnvelope`].

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::harnesses::{EvalStatus, GlsParams, RuleKind, IMPROVEMENT_EPS};
use crate::instances::{BppInstance, TspInstance};
use crate::optimizers::CallbackError;
use crate::scoring::{HarnessParams, TaskKind, MAX_OK_COST, WORST_COST};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_BYTES: usize = 512 << 20;

pub mod method {
    pub const HELLO: &str = "hello";
    pub const RUN_HEURISTIC: &str = "run_heuristic";
    pub const RUN_OPTIMIZER: &str = "run_optimizer";
    pub const UTILITY: &str = "cb.utility";
    pub const GET_BY_RANK: &str = "cb.population.get_by_rank";
    pub const GET_RANDOM: &str = "cb.population.get_random";
    pub const SIZE: &str = "cb.population.size";
    pub const PROMPT: &str = "cb.llm.prompt";
    pub const PROMPT_BATCH: &str = "cb.llm.prompt_batch";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    Call,
    Return,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpcEnvelope {
    pub id: String,
    pub kind: EnvelopeKind,
    pub method: String,
    #[serde(default)]
    pub payload: Value,
}

impl RpcEnvelope {
    pub fn call(id: impl Into<String>, method: &str, payload: Value) -> Self {
        Self { id: id.into(), kind: EnvelopeKind::Call, method: method.into(), payload }
    }

    pub fn reply(&self, payload: Value) -> Self {
        Self { id: self.id.clone(), kind: EnvelopeKind::Return, method: self.method.clone(), payload }
    }

    pub fn error(&self, err: &WireError) -> Self {
        Self {
            id: self.id.clone(),
            kind: EnvelopeKind::Error,
            method: self.method.clone(),
            payload: serde_json::to_value(err).expect("serializable"),
        }
    }
}

/// Payload of every `error` envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    /// `compile_error`, `runtime_error`, `protocol_error`, `budget_exhausted`,
    /// `candidate_limit`, `callback_budget`, `population`, `llm` or `timeout`.
    pub kind: String,
    pub message: String,
}

impl WireError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }
}

impl From<&CallbackError> for WireError {
    fn from(e: &CallbackError) -> Self {
        let v = serde_json::to_value(e).expect("serializable");
        WireError {
            kind: v["kind"].as_str().unwrap_or("runtime_error").to_string(),
            message: v["message"].as_str().unwrap_or_default().to_string(),
        }
    }
}

impl WireError {
    pub fn to_callback_error(&self) -> CallbackError {
        serde_json::from_value(serde_json::json!({"kind": self.kind, "message": self.message}))
            .unwrap_or_else(|_| CallbackError::Protocol(format!("{}: {}", self.kind, self.message)))
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("malformed frame: {0}")]
    Malformed(String),
}

pub fn write_frame<W: Write>(w: &mut W, env: &RpcEnvelope) -> Result<(), FrameError> {
    let body = serde_json::to_vec(env).map_err(|e| FrameError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(FrameError::TooLarge(body.len()));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<RpcEnvelope>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(FrameError::TooLarge(n));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    serde_json::from_slice(&body).map_err(|e| FrameError::Malformed(e.to_string())).map(Some)
}

/// Digest of every constant that must agree between the native engines and
/// a worker's mirrored harnesses.
pub fn parity_hash() -> String {
    let g = GlsParams::default();
    let desc = format!(
        "protocol={PROTOCOL_VERSION};eps={IMPROVEMENT_EPS:e};relocate_k={};gls_rounds={};gls_lambda={};\
         worst={WORST_COST};max_ok={MAX_OK_COST};kick=double_bridge/splitmix64;constructive_start=0;\
         bpp_tie=lowest_index;kgls_tie=lowest_tour_position",
        crate::harnesses::RELOCATE_NEIGHBORS,
        g.max_rounds,
        g.lambda_scale,
    );
    hex::encode(Sha256::digest(desc.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    pub parity_hash: String,
    #[serde(default)]
    pub worker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum WireInstance {
    /// `coords` is the flat list `x0, y0, x1, y1, ...`.
    Tsp { id: String, coords: Vec<f64> },
    Bpp { id: String, capacity: u32, weights: Vec<u32> },
}

impl WireInstance {
    pub fn from_tsp(t: &TspInstance) -> Self {
        WireInstance::Tsp { id: t.id.clone(), coords: t.coords().iter().flat_map(|c| [c[0], c[1]]).collect() }
    }

    pub fn from_bpp(b: &BppInstance) -> Self {
        WireInstance::Bpp { id: b.id.clone(), capacity: b.capacity(), weights: b.weights().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeuristic {
    pub task_kind: TaskKind,
    pub rule_kind: RuleKind,
    pub entry_symbol: String,
    pub code: String,
    pub params: HarnessParams,
    pub instances: Vec<WireInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeuristicResult {
    pub outcomes: Vec<EvalStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptimizer {
    pub code: String,
    pub subtask: String,
    pub subtask_prompt: String,
    pub candidate_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityCall {
    pub code: String,
    #[serde(default)]
    pub idea: String,
    pub subtask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReturn {
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCall {
    pub subtask: String,
    pub index: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskCall {
    pub subtask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReturn {
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCall {
    pub expertise: String,
    pub message: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptReturn {
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBatchCall {
    pub expertise: String,
    pub messages: Vec<String>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBatchReturn {
    pub responses: Vec<String>,
}
