//! Parsers for fenced code, brace-comment ideas and JSON list payloads.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no fenced code block found")]
    NoFencedBlock,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JsonExtractError {
    #[error("invalid JSON at byte {offset} (line {line}, column {column}): {message}")]
    Parse { offset: usize, line: usize, column: usize, message: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("`{0}` is not a list")]
    NotAList(String),
    #[error("element {0} is neither a string nor an object with a `content` string")]
    BadElement(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    pub tag: String,
    pub body: String,
}

fn is_tag_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '+' | '-' | '.' | '#')
}

/// Start of the first fence standing alone on its line.
fn own_line_fence(region: &str) -> Option<usize> {
    region.match_indices("```").map(|(i, _)| i).find(|&i| {
        let line_start = region[..i].rfind('\n').map_or(0, |n| n + 1);
        let line_end = region[i + 3..].find('\n').map_or(region.len(), |n| i + 3 + n);
        region[line_start..i].trim().is_empty() && region[i + 3..line_end].trim().is_empty()
    })
}

/// All closed fenced blocks in order of appearance. Inline fences
/// (```json {...} ```) are accepted as well as line-delimited ones. A block
/// opened on its own line closes at the next fence on its own line, so code
/// quoting fences inside string literals survives.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let tag_len = after.find(|c: char| !is_tag_char(c)).unwrap_or(after.len());
        let tag = after[..tag_len].to_string();
        let mut body_start = tag_len;
        let line_end = after[tag_len..].find('\n').map(|i| tag_len + i);
        if let Some(le) = line_end {
            if after[tag_len..le].trim().is_empty() {
                body_start = le + 1;
            }
        }
        let body_region = &after[body_start..];
        let line_block = line_end.is_some_and(|le| le < body_start);
        let close = if line_block { own_line_fence(body_region).or_else(|| body_region.find("```")) } else { body_region.find("```") };
        let Some(close) = close else { break };
        let body = body_region[..close].trim_end().trim_start_matches(['\r', '\n']);
        let body = if line_block { body.to_string() } else { body.trim().to_string() };
        out.push(FencedBlock { tag, body });
        rest = &body_region[close + 3..];
    }
    out
}

/// First language-tagged block, else the first block.
pub fn extract_code(text: &str) -> Result<String, ExtractError> {
    let blocks = fenced_blocks(text);
    blocks
        .iter()
        .find(|b| !b.tag.is_empty())
        .or_else(|| blocks.first())
        .map(|b| b.body.clone())
        .ok_or(ExtractError::NoFencedBlock)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Idea {
    pub text: String,
    /// Set when no comment-marked brace span was found.
    pub missing: bool,
}

/// First `# {...}` or `// {...}` span; braces may nest and span lines.
pub fn extract_idea(text: &str) -> Idea {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let marker = if bytes[i] == b'#' {
            1
        } else if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'/') {
            2
        } else {
            i += 1;
            continue;
        };
        let mut j = i + marker;
        while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
            j += 1;
        }
        if bytes.get(j) == Some(&b'{') {
            let mut depth = 0usize;
            for (k, &b) in bytes.iter().enumerate().skip(j) {
                match b {
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Idea { text: text[j + 1..k].trim().to_string(), missing: false };
                        }
                    }
                    _ => {}
                }
            }
        }
        i += marker;
    }
    Idea { text: String::new(), missing: true }
}

fn parse_json(src: &str) -> Result<Value, JsonExtractError> {
    serde_json::from_str(src).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        let offset = src
            .split_inclusive('\n')
            .take(line.saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + column.saturating_sub(1);
        JsonExtractError::Parse { offset, line, column, message: e.to_string() }
    })
}

/// Parses `{"<key>": [...]}` from a fenced block if present, else from the
/// whole text. Elements may be strings or `{"content": "..."}` objects.
pub fn extract_json_list(text: &str, key: &str) -> Result<Vec<String>, JsonExtractError> {
    let src = extract_code(text).unwrap_or_else(|_| text.trim().to_string());
    let value = parse_json(&src)?;
    let list = value.get(key).ok_or_else(|| JsonExtractError::MissingKey(key.to_string()))?;
    let items = list.as_array().ok_or_else(|| JsonExtractError::NotAList(key.to_string()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Object(o) => o
                .get("content")
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or(JsonExtractError::BadElement(i)),
            _ => Err(JsonExtractError::BadElement(i)),
        })
        .collect()
}

pub fn extract_json_insights(text: &str) -> Result<Vec<String>, JsonExtractError> {
    extract_json_list(text, "insights")
}
