//! Worker side of the protocol, serving the built-in rules and optimizers.

use std::io::{Read, Write};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::protocol::{
    method, parity_hash, read_frame, write_frame, EnvelopeKind, FrameError, Hello, PromptBatchCall, PromptBatchReturn,
    PromptCall, PromptReturn, RankCall, RpcEnvelope, RunHeuristic, RunHeuristicResult, RunOptimizer, SizeReturn,
    SubtaskCall, UtilityCall, UtilityReturn, WireError, WireInstance, PROTOCOL_VERSION,
};
use crate::executor::evaluate_native;
use crate::harnesses::rules::resolve_code;
use crate::instances::{BppInstance, Instances, TspInstance};
use crate::optimizers::{resolve_optimizer, CallbackError, OptimizerHost, SolutionView};

struct Conn<R, W> {
    input: R,
    output: W,
    next_id: u64,
}

impl<R: Read, W: Write> Conn<R, W> {
    fn send(&mut self, env: &RpcEnvelope) -> Result<(), FrameError> {
        write_frame(&mut self.output, env)
    }

    fn recv(&mut self) -> Result<RpcEnvelope, FrameError> {
        read_frame(&mut self.input)?.ok_or(FrameError::Truncated)
    }

    /// Issues a call and waits for its reply.
    fn request(&mut self, m: &str, payload: Value) -> Result<Value, CallbackError> {
        self.next_id += 1;
        let id = format!("w{}", self.next_id);
        self.send(&RpcEnvelope::call(id.clone(), m, payload)).map_err(|e| CallbackError::Protocol(e.to_string()))?;
        let env = self.recv().map_err(|e| CallbackError::Protocol(e.to_string()))?;
        if env.id != id {
            return Err(CallbackError::Protocol(format!("reply for {} while waiting for {id}", env.id)));
        }
        match env.kind {
            EnvelopeKind::Return => Ok(env.payload),
            EnvelopeKind::Error => Err(serde_json::from_value::<WireError>(env.payload)
                .map(|w| w.to_callback_error())
                .unwrap_or_else(|e| CallbackError::Protocol(e.to_string()))),
            EnvelopeKind::Call => Err(CallbackError::Protocol("orchestrator sent a call during a callback".into())),
        }
    }
}

struct ProxyHost<'a, R, W> {
    conn: &'a Mutex<Conn<R, W>>,
    candidate_limit: usize,
}

impl<R: Read + Send, W: Write + Send> ProxyHost<'_, R, W> {
    fn ask<T: DeserializeOwned>(&self, m: &str, payload: Value) -> Result<T, CallbackError> {
        let v = self.conn.lock().unwrap().request(m, payload)?;
        serde_json::from_value(v).map_err(|e| CallbackError::Protocol(format!("bad {m} reply: {e}")))
    }
}

impl<R: Read + Send, W: Write + Send> OptimizerHost for ProxyHost<'_, R, W> {
    fn get_solution_by_index(&self, subtask: &str, index: usize) -> Result<SolutionView, CallbackError> {
        self.ask(method::GET_BY_RANK, json!(RankCall { subtask: subtask.into(), index: index as i64 }))
    }

    fn get_random_solution(&self, subtask: &str) -> Result<SolutionView, CallbackError> {
        self.ask(method::GET_RANDOM, json!(SubtaskCall { subtask: subtask.into() }))
    }

    fn get_subtask_size(&self, subtask: &str) -> Result<usize, CallbackError> {
        self.ask::<SizeReturn>(method::SIZE, json!(SubtaskCall { subtask: subtask.into() })).map(|r| r.size)
    }

    fn utility(&self, code: &str, idea: &str, subtask: &str) -> Result<f64, CallbackError> {
        let call = UtilityCall { code: code.into(), idea: idea.into(), subtask: subtask.into() };
        self.ask::<UtilityReturn>(method::UTILITY, json!(call)).map(|r| r.utility)
    }

    fn prompt(&self, expertise: &str, message: &str, temperature: f64) -> Result<String, CallbackError> {
        let call = PromptCall { expertise: expertise.into(), message: message.into(), temperature };
        self.ask::<PromptReturn>(method::PROMPT, json!(call)).map(|r| r.response)
    }

    fn prompt_batch(&self, expertise: &str, messages: &[String], temperature: f64) -> Result<Vec<String>, CallbackError> {
        let call = PromptBatchCall { expertise: expertise.into(), messages: messages.to_vec(), temperature };
        self.ask::<PromptBatchReturn>(method::PROMPT_BATCH, json!(call)).map(|r| r.responses)
    }

    fn candidate_limit(&self) -> usize {
        self.candidate_limit
    }
}

fn to_instances(wire: Vec<WireInstance>) -> Result<Instances, String> {
    let mut tsp = Vec::new();
    let mut bpp = Vec::new();
    for w in wire {
        match w {
            WireInstance::Tsp { id, coords } => {
                if coords.len() % 2 != 0 {
                    return Err(format!("instance {id}: odd coordinate count"));
                }
                let pts = coords.chunks(2).map(|c| [c[0], c[1]]).collect();
                tsp.push(TspInstance::new(id, pts).map_err(|e| e.to_string())?);
            }
            WireInstance::Bpp { id, capacity, weights } => {
                bpp.push(BppInstance::new(id, capacity, weights).map_err(|e| e.to_string())?)
            }
        }
    }
    match (tsp.is_empty(), bpp.is_empty()) {
        (false, true) => Ok(Instances::Tsp(tsp)),
        (true, false) => Ok(Instances::Bpp(bpp)),
        (true, true) => Err("no instances".into()),
        (false, false) => Err("mixed problem kinds".into()),
    }
}

fn run_heuristic(payload: Value) -> Result<Value, WireError> {
    let req: RunHeuristic = serde_json::from_value(payload).map_err(|e| WireError::new("protocol_error", e.to_string()))?;
    let Some(spec) = resolve_code(req.rule_kind, &req.code) else {
        return Err(WireError::new(
            "compile_error",
            format!("this worker only runs built-in rules; no built-in `{}` matches the code", req.entry_symbol),
        ));
    };
    let instances = to_instances(req.instances).map_err(|e| WireError::new("protocol_error", e))?;
    let outcomes = evaluate_native(req.task_kind, spec.rule, &instances, &req.params).into_iter().map(|o| o.status).collect();
    Ok(json!(RunHeuristicResult { outcomes }))
}

/// Serves the protocol on a byte stream pair until the orchestrator hangs up.
pub fn serve<R: Read + Send, W: Write + Send>(input: R, output: W) -> Result<(), FrameError> {
    let conn = Mutex::new(Conn { input, output, next_id: 0 });
    let hello = Hello { protocol_version: PROTOCOL_VERSION, parity_hash: parity_hash(), worker: "moh-native-worker".into() };
    {
        let mut c = conn.lock().unwrap();
        c.send(&RpcEnvelope::call("w0", method::HELLO, json!(hello)))?;
        let ack = c.recv()?;
        if ack.kind != EnvelopeKind::Return {
            return Err(FrameError::Malformed(format!("handshake refused: {}", ack.payload)));
        }
    }
    loop {
        let Some(env) = read_frame(&mut conn.lock().unwrap().input)? else { return Ok(()) };
        if env.kind != EnvelopeKind::Call {
            let err = WireError::new("protocol_error", "expected a call");
            conn.lock().unwrap().send(&env.error(&err))?;
            continue;
        }
        let result = match env.method.as_str() {
            method::RUN_HEURISTIC => run_heuristic(env.payload.clone()),
            method::RUN_OPTIMIZER => match serde_json::from_value::<RunOptimizer>(env.payload.clone()) {
                Err(e) => Err(WireError::new("protocol_error", e.to_string())),
                Ok(req) => match resolve_optimizer(&req.code) {
                    None => Err(WireError::new(
                        "compile_error",
                        "this worker only runs built-in optimizers; no built-in `optimize_algorithm` matches the code",
                    )),
                    Some(spec) => {
                        let host = ProxyHost { conn: &conn, candidate_limit: req.candidate_limit };
                        spec.imp
                            .optimize(&host, &req.subtask_prompt, &req.subtask)
                            .map(|r| json!(r))
                            .map_err(|e| WireError::from(&e))
                    }
                },
            },
            other => Err(WireError::new("protocol_error", format!("unknown method `{other}`"))),
        };
        let reply = match result {
            Ok(v) => env.reply(v),
            Err(w) => env.error(&w),
        };
        conn.lock().unwrap().send(&reply)?;
    }
}
