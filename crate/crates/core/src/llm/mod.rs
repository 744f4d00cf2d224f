//! Language-model gateway: requests, transcript record/replay and batching.

pub mod extract;
pub mod provider;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::{extract_code, extract_idea, extract_json_insights, extract_json_list, ExtractError, Idea, JsonExtractError};
pub use provider::{Completion, FnProvider, HttpProvider, Provider};

pub const DEFAULT_CONCURRENCY: usize = 4;
pub const CHARS_PER_TOKEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("replay miss: no recorded response #{index} for request {digest}")]
    ReplayMiss { digest: String, index: usize },
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub expertise: String,
    pub message: String,
    pub temperature: f64,
}

impl PromptRequest {
    pub fn new(expertise: impl Into<String>, message: impl Into<String>, temperature: f64) -> Result<Self, LlmError> {
        let req = Self { expertise: expertise.into(), message: message.into(), temperature };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.message.is_empty() {
            return Err(LlmError::InvalidRequest("message is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON of (expertise, message, temperature).
    pub fn digest(&self) -> String {
        let canon = serde_json::to_string(&(&self.expertise, &self.message, self.temperature)).expect("serializable");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    fn estimated_usage(&self, response: &str) -> Usage {
        let est = |s: &str| s.chars().count().div_ceil(CHARS_PER_TOKEN) as u64;
        Usage { input_tokens: est(&self.expertise) + est(&self.message), output_tokens: est(response) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    #[default]
    Live,
    Record,
    Replay,
}

/// One line of a transcript file. `index` numbers repeated identical requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub index: usize,
    pub request: PromptRequest,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageCounters {
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub(crate) fn new(n: usize) -> Self {
        Self { permits: Mutex::new(n), cv: Condvar::new() }
    }

    pub(crate) fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        SemaphoreGuard(self)
    }
}

pub(crate) struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Default)]
struct StoreState {
    entries: HashMap<String, Vec<Option<TranscriptEntry>>>,
    next_index: HashMap<String, usize>,
    writer: Option<BufWriter<File>>,
}

/// Thread-safe request gateway. In record mode previously recorded entries
/// are served first, so an interrupted recording can be resumed.
pub struct TranscriptStore {
    mode: TranscriptMode,
    provider: Option<Arc<dyn Provider>>,
    state: Mutex<StoreState>,
    limiter: Semaphore,
    concurrency: usize,
    requests: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let f = File::open(path).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Transcript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TranscriptEntry = serde_json::from_str(&line)
            .map_err(|e| LlmError::Transcript(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

impl TranscriptStore {
    fn build(mode: TranscriptMode, provider: Option<Arc<dyn Provider>>, concurrency: usize) -> Self {
        let concurrency = concurrency.max(1);
        Self {
            mode,
            provider,
            state: Mutex::new(StoreState::default()),
            limiter: Semaphore::new(concurrency),
            concurrency,
            requests: AtomicU64::new(0),
            input_tokens: AtomicU64::new(0),
            output_tokens: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn live(provider: Arc<dyn Provider>, concurrency: usize) -> Self {
        Self::build(TranscriptMode::Live, Some(provider), concurrency)
    }

    /// Records into memory only.
    pub fn record_in_memory(provider: Arc<dyn Provider>, concurrency: usize) -> Self {
        Self::build(TranscriptMode::Record, Some(provider), concurrency)
    }

    /// Records to `path`, appending; existing entries are loaded and served first.
    pub fn record(provider: Arc<dyn Provider>, path: &Path, concurrency: usize) -> Result<Self, LlmError> {
        let store = Self::build(TranscriptMode::Record, Some(provider), concurrency);
        if path.exists() {
            store.load(read_transcript(path)?)?;
        }
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        store.state.lock().unwrap().writer = Some(BufWriter::new(f));
        Ok(store)
    }

    pub fn replay(entries: Vec<TranscriptEntry>) -> Result<Self, LlmError> {
        let store = Self::build(TranscriptMode::Replay, None, 1);
        store.load(entries)?;
        Ok(store)
    }

    pub fn replay_file(path: &Path) -> Result<Self, LlmError> {
        Self::replay(read_transcript(path)?)
    }

    fn load(&self, entries: Vec<TranscriptEntry>) -> Result<(), LlmError> {
        let mut st = self.state.lock().unwrap();
        for e in entries {
            if e.request.digest() != e.digest {
                return Err(LlmError::Transcript(format!("digest mismatch for entry {} #{}", e.digest, e.index)));
            }
            let slot = st.entries.entry(e.digest.clone()).or_default();
            if slot.len() <= e.index {
                slot.resize(e.index + 1, None);
            }
            if slot[e.index].is_some() {
                return Err(LlmError::Transcript(format!("duplicate entry {} #{}", e.digest, e.index)));
            }
            let idx = e.index;
            slot[idx] = Some(e);
        }
        Ok(())
    }

    pub fn mode(&self) -> TranscriptMode {
        self.mode
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    pub fn counters(&self) -> UsageCounters {
        UsageCounters {
            requests: self.requests.load(Ordering::SeqCst),
            input_tokens: self.input_tokens.load(Ordering::SeqCst),
            output_tokens: self.output_tokens.load(Ordering::SeqCst),
        }
    }

    /// Highest number of simultaneous provider calls observed.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    /// Next response index per request digest.
    pub fn cursor(&self) -> BTreeMap<String, usize> {
        self.state.lock().unwrap().next_index.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    /// Continues a run: repeated requests resume after the saved indices.
    pub fn restore(&self, cursor: &BTreeMap<String, usize>, counters: UsageCounters) {
        self.state.lock().unwrap().next_index = cursor.iter().map(|(k, v)| (k.clone(), *v)).collect();
        self.requests.store(counters.requests, Ordering::SeqCst);
        self.input_tokens.store(counters.input_tokens, Ordering::SeqCst);
        self.output_tokens.store(counters.output_tokens, Ordering::SeqCst);
    }

    /// All known entries ordered by (digest, index).
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let st = self.state.lock().unwrap();
        let mut keys: Vec<&String> = st.entries.keys().collect();
        keys.sort();
        keys.into_iter().flat_map(|k| st.entries[k].iter().flatten().cloned()).collect()
    }

    fn reserve(&self, req: &PromptRequest) -> Result<(String, usize), LlmError> {
        req.validate()?;
        let digest = req.digest();
        let mut st = self.state.lock().unwrap();
        let n = st.next_index.entry(digest.clone()).or_insert(0);
        let index = *n;
        *n += 1;
        Ok((digest, index))
    }

    fn recorded(&self, digest: &str, index: usize) -> Option<TranscriptEntry> {
        let st = self.state.lock().unwrap();
        st.entries.get(digest).and_then(|v| v.get(index)).cloned().flatten()
    }

    fn tally(&self, usage: Usage) {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.input_tokens.fetch_add(usage.input_tokens, Ordering::SeqCst);
        self.output_tokens.fetch_add(usage.output_tokens, Ordering::SeqCst);
    }

    fn call_provider(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        let provider = self.provider.as_ref().ok_or_else(|| LlmError::Config("no provider configured".into()))?;
        let _permit = self.limiter.acquire();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        let out = provider.complete(req);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }

    fn fulfil(&self, req: &PromptRequest, digest: String, index: usize) -> Result<String, LlmError> {
        if self.mode != TranscriptMode::Live {
            if let Some(e) = self.recorded(&digest, index) {
                self.tally(e.usage.unwrap_or_else(|| req.estimated_usage(&e.response)));
                return Ok(e.response);
            }
            if self.mode == TranscriptMode::Replay {
                return Err(LlmError::ReplayMiss { digest, index });
            }
        }
        let c = self.call_provider(req)?;
        let usage = c.usage.unwrap_or_else(|| req.estimated_usage(&c.text));
        self.tally(usage);
        if self.mode == TranscriptMode::Record {
            let entry = TranscriptEntry { digest: digest.clone(), index, request: req.clone(), response: c.text.clone(), usage: Some(usage) };
            let mut st = self.state.lock().unwrap();
            if let Some(w) = st.writer.as_mut() {
                let line = serde_json::to_string(&entry).expect("serializable");
                writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| LlmError::Transcript(e.to_string()))?;
            }
            let slot = st.entries.entry(digest).or_default();
            if slot.len() <= index {
                slot.resize(index + 1, None);
            }
            slot[index] = Some(entry);
        }
        Ok(c.text)
    }

    pub fn prompt(&self, req: &PromptRequest) -> Result<String, LlmError> {
        let (digest, index) = self.reserve(req)?;
        self.fulfil(req, digest, index)
    }

    /// Responses are aligned with `reqs`. Duplicate indices are assigned in
    /// request order before the fan-out, so replay is order-independent.
    pub fn prompt_batch(&self, reqs: &[PromptRequest]) -> Result<Vec<String>, LlmError> {
        let keys = reqs.iter().map(|r| self.reserve(r)).collect::<Result<Vec<_>, _>>()?;
        if reqs.len() <= 1 || self.mode == TranscriptMode::Replay {
            return reqs.iter().zip(keys).map(|(r, (d, i))| self.fulfil(r, d, i)).collect();
        }
        let slots: Vec<Mutex<Option<Result<String, LlmError>>>> = reqs.iter().map(|_| Mutex::new(None)).collect();
        let work: Mutex<Vec<(usize, String, usize)>> =
            Mutex::new(keys.into_iter().enumerate().rev().map(|(k, (d, i))| (k, d, i)).collect());
        std::thread::scope(|s| {
            for _ in 0..self.concurrency.min(reqs.len()) {
                s.spawn(|| loop {
                    let Some((k, d, i)) = work.lock().unwrap().pop() else { break };
                    let r = self.fulfil(&reqs[k], d, i);
                    *slots[k].lock().unwrap() = Some(r);
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot filled")).collect()
    }

    pub fn flush(&self) -> Result<(), LlmError> {
        if let Some(w) = self.state.lock().unwrap().writer.as_mut() {
            w.flush().map_err(|e| LlmError::Transcript(e.to_string()))?;
        }
        Ok(())
    }
}

/// Writes entries as a transcript file.
pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> Result<(), LlmError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| LlmError::Transcript(e.to_string()))?);
    for e in entries {
        writeln!(w, "{}", serde_json::to_string(e).expect("serializable")).map_err(|e| LlmError::Transcript(e.to_string()))?;
    }
    w.flush().map_err(|e| LlmError::Transcript(e.to_string()))
}

/// Entry constructor for hand-written fixtures.
pub fn fixture_entry(req: PromptRequest, index: usize, response: impl Into<String>) -> TranscriptEntry {
    TranscriptEntry { digest: req.digest(), index, request: req, response: response.into(), usage: None }
}

pub fn transcript_path(dir: &Path) -> PathBuf {
    dir.join("transcript.jsonl")
}
