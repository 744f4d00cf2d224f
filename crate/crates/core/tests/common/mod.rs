#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use moh_core::harnesses::rules::find_native_rule;
use moh_core::harnesses::RuleKind;
use moh_core::llm::PromptRequest;
use moh_core::optimizers::find_native_optimizer;
use serde_json::{json, Value};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay")
}

pub fn moh() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_moh"));
    c.env_remove("MOH_LLM_API_KEY").env("RUST_LOG", "warn");
    c
}

pub fn run_moh(args: &[&str]) -> Output {
    moh().args(args).output().expect("moh runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Copies the replay fixture into a fresh directory so runs write next to it.
pub fn fixture_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for e in std::fs::read_dir(fixture_dir()).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_file() {
            std::fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
        }
    }
    dir
}

fn rule(name: &str) -> &'static str {
    find_native_rule(RuleKind::BinScore, name).unwrap().source
}

fn fenced(code: &str) -> String {
    format!("Here you go.\n```python\n{code}\n```\n")
}

fn json_list(key: &str, items: &[&str]) -> String {
    format!("```json\n{}\n```", json!({ key: items }))
}

/// Each improvement moves one step along worst fit, ratio penalty, first fit,
/// best fit, judged by the code shown in the prompt.
fn next_step(m: &str) -> &'static str {
    if m.contains("return bins - item") {
        "ratio_penalty"
    } else if m.contains("proximity_penalty") {
        "first_fit"
    } else {
        "best_fit"
    }
}

/// Scripted model for bin-packing runs; answers by prompt content only.
pub fn respond(r: &PromptRequest) -> String {
    let m = r.message.as_str();
    if m.contains("high-level directions") {
        return "```json\n{\"direction\": [{\"content\": \"spread out\"}, {\"content\": \"be vague\"}]}\n```"
            .into();
    }
    if m.starts_with("Given the following heuristics for the problem") {
        return json_list("insights", &["penalize waste", "spread out"]);
    }
    if m.starts_with("Given the following heuristic for subtask") || m.starts_with("The best heuristic so far") {
        return json_list("insights", &["penalize waste", "pack tightly"]);
    }
    if m.starts_with("Improve the following") || m.starts_with("Refine the following") {
        if m.contains("named 'optimize_algorithm'") {
            return fenced(find_native_optimizer("elitist").unwrap().source);
        }
        return fenced(rule(next_step(m)));
    }
    if m.contains("Write a function") {
        for (d, name) in
            [("pack tightly", "best_fit"), ("first come", "first_fit"), ("spread out", "worst_fit"), ("penalize waste", "ratio_penalty")]
        {
            if m.contains(&format!("direction: {d}.")) {
                return fenced(rule(name));
            }
        }
        if m.contains("direction: be vague.") {
            return "I am not sure how to do that.".into();
        }
        return fenced(rule("first_fit"));
    }
    panic!("unscripted prompt: {}", &m[..m.len().min(120)]);
}

/// A chat-completions endpoint on localhost answering with [`respond`].
pub struct FakeLlm {
    pub url: String,
}

impl FakeLlm {
    pub fn start(delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                std::thread::spawn(move || serve(stream, delay));
            }
        });
        Self { url }
    }
}

fn serve(stream: TcpStream, delay: Duration) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let v: Value = serde_json::from_slice(&body).unwrap();
    let req = PromptRequest {
        expertise: v["messages"][0]["content"].as_str().unwrap().to_string(),
        message: v["messages"][1]["content"].as_str().unwrap().to_string(),
        temperature: v["temperature"].as_f64().unwrap(),
    };
    std::thread::sleep(delay);
    let text = respond(&req);
    let out = json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": (req.expertise.len() + req.message.len()) / 4, "completion_tokens": text.len() / 4},
    })
    .to_string();
    let mut s = stream;
    let _ = write!(
        s,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
        out.len()
    );
}

/// Replaces the `[llm]` table of the fixture config.
pub fn with_llm(config: &str, llm: &str) -> String {
    let start = config.find("[llm]").expect("fixture config has an [llm] table");
    let end = config[start..].find("\n[[").map_or(config.len(), |i| start + i + 1);
    format!("{}{llm}\n{}", &config[..start], &config[end..])
}

pub fn read_lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}
