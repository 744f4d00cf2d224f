//! Chat-completion transports.

use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmError, PromptRequest, Usage};

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<Usage>,
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError>;
}

pub const ENV_ENDPOINT: &str = "MOH_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "MOH_LLM_MODEL";
pub const ENV_API_KEY: &str = "MOH_LLM_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const MAX_RETRIES: u32 = 3;

pub fn api_key_from_env() -> Result<String, LlmError> {
    std::env::var(ENV_API_KEY).ok().filter(|k| !k.trim().is_empty()).ok_or_else(|| {
        LlmError::Config(format!(
            "{ENV_API_KEY} is not set; export an API key for live or record mode, or use replay mode with a recorded transcript"
        ))
    })
}

/// OpenAI-compatible `chat/completions` client.
pub struct HttpProvider {
    endpoint: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
    backoff: Duration,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            client,
            backoff: Duration::from_secs(1),
        })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let key = api_key_from_env()?;
        let endpoint = std::env::var(ENV_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Self::new(endpoint, model, key)
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, req: &PromptRequest) -> Result<Completion, (bool, String)> {
        let body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.expertise},
                {"role": "user", "content": req.message},
            ],
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let transient = status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error();
            let text = resp.text().unwrap_or_default();
            return Err((transient, format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let v: Value = resp.json().map_err(|e| (true, e.to_string()))?;
        parse_completion(&v).ok_or_else(|| (false, format!("unexpected response shape: {v}")))
    }
}

pub(crate) fn parse_completion(v: &Value) -> Option<Completion> {
    let text = v.pointer("/choices/0/message/content")?.as_str()?.to_string();
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            input_tokens: u.get("prompt_tokens")?.as_u64()?,
            output_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Some(Completion { text, usage })
}

impl Provider for HttpProvider {
    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(req) {
                Ok(c) => return Ok(c),
                Err((transient, msg)) => {
                    if !transient || attempt >= MAX_RETRIES {
                        return Err(LlmError::Transport(format!("{msg} (after {} attempts)", attempt + 1)));
                    }
                    log::warn!("transient LLM failure, retrying in {delay:?}: {msg}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

/// Provider backed by a closure; used for tests and offline scripting.
pub struct FnProvider<F>(pub F);

impl<F> Provider for FnProvider<F>
where
    F: Fn(&PromptRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        (self.0)(req).map(|text| Completion { text, usage: None })
    }
}
