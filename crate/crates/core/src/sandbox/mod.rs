//! Worker processes for generated code and the callback protocol they speak.
//!
//! The orchestrator launches workers, performs a version and parity
//! handshake, ships heuristic evaluations or optimizer runs, and answers
//! the worker's `cb.*` callbacks against read-only population snapshots,
//! the scoring path and the language model gateway. Populations are never
//! written through the protocol.

pub mod protocol;
mod serve;
mod worker;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::optimizers::OptimizerHost;
use protocol::{
    method, EnvelopeKind, PromptBatchCall, PromptBatchReturn, PromptCall, PromptReturn, RankCall, RpcEnvelope, SizeReturn,
    SubtaskCall, UtilityCall, UtilityReturn, WireError,
};

pub use serve::serve;
pub use worker::{spawn_worker, WorkerCommand, WorkerHandle, WorkerPool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceLimits {
    /// Seconds per heuristic evaluation.
    pub wall_timeout: f64,
    /// Seconds per optimizer run, callbacks included.
    pub optimizer_timeout: f64,
    /// Address-space cap in bytes.
    pub memory_cap: u64,
    /// Maximum callbacks answered per run.
    pub callback_budget: u32,
    pub handshake_timeout: f64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self { wall_timeout: 60.0, optimizer_timeout: 900.0, memory_cap: 4 << 30, callback_budget: 200, handshake_timeout: 10.0 }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        let secs = [self.wall_timeout, self.optimizer_timeout, self.handshake_timeout];
        if secs.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err("timeouts must be finite and positive".into());
        }
        if self.memory_cap == 0 || self.callback_budget == 0 {
            return Err("memory_cap and callback_budget must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("could not start worker: {0}")]
    Spawn(String),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("worker exceeded {0} s and was killed")]
    Timeout(f64),
    #[error("worker died: {0}")]
    WorkerDied(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("worker reported {}: {}", .0.kind, .0.message)]
    Remote(WireError),
    #[error("callback budget of {0} exceeded")]
    CallbackBudget(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("not a call envelope")]
    NotACall,
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("bad payload for `{method}`: {message}")]
    BadPayload { method: String, message: String },
}

fn parse<T: serde::de::DeserializeOwned>(env: &RpcEnvelope) -> Result<T, RouteError> {
    serde_json::from_value(env.payload.clone())
        .map_err(|e| RouteError::BadPayload { method: env.method.clone(), message: e.to_string() })
}

/// Answers one `cb.*` call. Callback failures become `error` envelopes the
/// worker can surface to generated code; an unknown method or malformed
/// payload is a protocol error that aborts the run.
pub fn route_callback(env: &RpcEnvelope, host: &dyn OptimizerHost) -> Result<RpcEnvelope, RouteError> {
    if env.kind != EnvelopeKind::Call {
        return Err(RouteError::NotACall);
    }
    let result: Result<Value, crate::optimizers::CallbackError> = match env.method.as_str() {
        method::UTILITY => {
            let c: UtilityCall = parse(env)?;
            host.utility(&c.code, &c.idea, &c.subtask).map(|u| json!(UtilityReturn { utility: u }))
        }
        method::GET_BY_RANK => {
            let c: RankCall = parse(env)?;
            if c.index < 0 {
                Err(crate::optimizers::CallbackError::Population(format!("negative rank {}", c.index)))
            } else {
                host.get_solution_by_index(&c.subtask, c.index as usize).map(|s| json!(s))
            }
        }
        method::GET_RANDOM => {
            let c: SubtaskCall = parse(env)?;
            host.get_random_solution(&c.subtask).map(|s| json!(s))
        }
        method::SIZE => {
            let c: SubtaskCall = parse(env)?;
            host.get_subtask_size(&c.subtask).map(|size| json!(SizeReturn { size }))
        }
        method::PROMPT => {
            let c: PromptCall = parse(env)?;
            host.prompt(&c.expertise, &c.message, c.temperature).map(|response| json!(PromptReturn { response }))
        }
        method::PROMPT_BATCH => {
            let c: PromptBatchCall = parse(env)?;
            host.prompt_batch(&c.expertise, &c.messages, c.temperature)
                .map(|responses| json!(PromptBatchReturn { responses }))
        }
        other => return Err(RouteError::UnknownMethod(other.to_string())),
    };
    Ok(match result {
        Ok(v) => env.reply(v),
        Err(e) => env.error(&WireError::from(&e)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::testing::ScriptedHost;
    use crate::optimizers::SolutionView;

    fn host() -> ScriptedHost {
        let members = (0..10)
            .map(|i| SolutionView { best_sol: format!("code{i}"), idea: format!("idea{i}"), utility: i as f64 / 10.0 })
            .collect();
        ScriptedHost::new(members, vec!["r1".into(), "r2".into(), "r3".into()], &[("good", 0.05)])
    }

    fn call(m: &str, p: Value) -> RpcEnvelope {
        RpcEnvelope::call("w1", m, p)
    }

    #[test]
    fn population_reads() {
        let h = host();
        let r = route_callback(&call(method::SIZE, json!({"subtask": "t"})), &h).unwrap();
        assert_eq!(r.kind, EnvelopeKind::Return);
        assert_eq!(r.payload, json!({"size": 10}));
        let r = route_callback(&call(method::GET_BY_RANK, json!({"subtask": "t", "index": 0})), &h).unwrap();
        assert_eq!(r.payload, json!({"best_sol": "code0", "idea": "idea0", "utility": 0.0}));
        assert_eq!(r.id, "w1");
        let r = route_callback(&call(method::GET_RANDOM, json!({"subtask": "t"})), &h).unwrap();
        assert!(r.payload.get("best_sol").is_some());
        let r = route_callback(&call(method::GET_BY_RANK, json!({"subtask": "t", "index": 10})), &h).unwrap();
        assert_eq!(r.kind, EnvelopeKind::Error);
        assert_eq!(r.payload["kind"], "population");
        let r = route_callback(&call(method::GET_BY_RANK, json!({"subtask": "t", "index": -1})), &h).unwrap();
        assert_eq!(r.kind, EnvelopeKind::Error);
    }

    #[test]
    fn utility_and_llm() {
        let h = host();
        let r = route_callback(&call(method::UTILITY, json!({"code": "good", "idea": "", "subtask": "t"})), &h).unwrap();
        assert_eq!(r.payload, json!({"utility": 0.05}));
        let r = route_callback(&call(method::PROMPT, json!({"expertise": "e", "message": "m", "temperature": 1.0})), &h).unwrap();
        assert_eq!(r.payload, json!({"response": "r1"}));
        let r = route_callback(
            &call(method::PROMPT_BATCH, json!({"expertise": "e", "messages": ["a", "b"], "temperature": 0.7})),
            &h,
        )
        .unwrap();
        assert_eq!(r.payload, json!({"responses": ["r2", "r3"]}));
    }

    #[test]
    fn no_write_capability() {
        let h = host();
        for m in ["cb.population.insert", "cb.population.set", "run_heuristic", "cb.budget.reset", "nope"] {
            assert_eq!(route_callback(&call(m, json!({})), &h), Err(RouteError::UnknownMethod(m.into())));
        }
        assert!(matches!(
            route_callback(&call(method::SIZE, json!({"task": "t"})), &h),
            Err(RouteError::BadPayload { .. })
        ));
        let mut ret = call(method::SIZE, json!({"subtask": "t"}));
        ret.kind = EnvelopeKind::Return;
        assert_eq!(route_callback(&ret, &h), Err(RouteError::NotACall));
    }

    #[test]
    fn limits_validate() {
        assert!(ResourceLimits::default().validate().is_ok());
        assert!(ResourceLimits { wall_timeout: 0.0, ..Default::default() }.validate().is_err());
        assert!(ResourceLimits { callback_budget: 0, ..Default::default() }.validate().is_err());
    }
}
