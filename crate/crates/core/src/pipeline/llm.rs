//! Chat-completion clients.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompt::LIST_HEADER;
use crate::http::{join_url, JsonClient, RetryPolicy};

pub const LLM_API_BASE: &str = "LLM_API_BASE";
pub const LLM_API_KEY: &str = "LLM_API_KEY";
pub const LLM_MODEL: &str = "LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM endpoint failed: {0}")]
    Transport(String),
    #[error("LLM response malformed: {0}")]
    Malformed(String),
    #[error("no scripted response for prompt {0}")]
    NoScript(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
}

/// Hex SHA-256 of the rendered prompt; keys scripted responses and run logs.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// A single-turn chat completion.
pub trait LlmClient: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteChatConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub model: String,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
}

impl RemoteChatConfig {
    /// `LLM_API_BASE`, `LLM_API_KEY` and `LLM_MODEL`.
    pub fn from_env() -> Option<Self> {
        Some(RemoteChatConfig {
            api_base: std::env::var(LLM_API_BASE).ok()?,
            api_key: std::env::var(LLM_API_KEY).ok(),
            model: std::env::var(LLM_MODEL).ok()?,
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
        })
    }
}

/// Client for `POST {base}/chat/completions`.
#[derive(Debug, Clone)]
pub struct RemoteChatClient {
    config: RemoteChatConfig,
    client: JsonClient,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

impl RemoteChatClient {
    pub fn new(config: RemoteChatConfig) -> Self {
        let client = JsonClient::new(config.api_key.clone(), config.retry.clone());
        RemoteChatClient { config, client }
    }
}

impl LlmClient for RemoteChatClient {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.decoding.temperature,
            max_tokens: self.config.decoding.max_tokens,
        };
        let url = join_url(&self.config.api_base, "chat/completions");
        let resp: ChatResponse = self.client.post(&url, &body).map_err(|e| match e {
            crate::http::HttpError::Decode(d) => LlmError::Malformed(d),
            other => LlmError::Transport(other.to_string()),
        })?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("no message content in first choice".into()))
    }
}

/// Deterministic stand-in for a model when no script entry matches: reads the
/// prompt's own context and answers from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoPolicy {
    /// Maximum datasets named for recommendation prompts.
    pub recommend: usize,
    /// Maximum labels picked from the candidate list for estimation prompts.
    pub estimate: usize,
    /// Adds one invented dataset name to every k-th recommendation prompt
    /// (chosen by prompt hash). `None` never invents.
    pub hallucinate_every: Option<u64>,
}

impl Default for EchoPolicy {
    fn default() -> Self {
        EchoPolicy {
            recommend: 4,
            estimate: 6,
            hallucinate_every: Some(4),
        }
    }
}

static CONTEXT_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^(?:Context: )?\[\d+\] Name: (.*)$").unwrap());

impl EchoPolicy {
    pub fn respond(&self, prompt: &str) -> String {
        let digest = Sha256::digest(prompt.as_bytes());
        let bits = u64::from_le_bytes(digest[..8].try_into().unwrap());
        let picks: Vec<String> = match candidate_list(prompt) {
            Some(candidates) => pick(&candidates, self.estimate, bits),
            None => {
                let names: Vec<String> = CONTEXT_NAME
                    .captures_iter(prompt)
                    .map(|c| c[1].trim().to_string())
                    .collect();
                let mut picks = pick(&names, self.recommend, bits);
                if let Some(every) = self.hallucinate_every.filter(|k| *k > 0) {
                    let selector = u64::from_le_bytes(digest[8..16].try_into().unwrap());
                    if selector % every == 0 {
                        let topic = names
                            .first()
                            .and_then(|n| n.split_whitespace().next())
                            .unwrap_or("Regional");
                        picks.push(format!("Projected {topic} Outlook Series {}", selector % 1000));
                    }
                }
                picks
            }
        };
        if picks.is_empty() {
            return "I don't know.".to_string();
        }
        picks
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{}. {}", i + 1, p))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Items whose bit in `bits` is set, in order, capped at `limit`; falls back
/// to the first item when no bit selects anything.
fn pick(items: &[String], limit: usize, bits: u64) -> Vec<String> {
    let mut out: Vec<String> = items
        .iter()
        .enumerate()
        .filter(|(i, _)| bits >> (i % 64) & 1 == 1)
        .map(|(_, s)| s.clone())
        .take(limit)
        .collect();
    if out.is_empty() && limit > 0 {
        out.extend(items.first().cloned());
    }
    out
}

fn candidate_list(prompt: &str) -> Option<Vec<String>> {
    let question = prompt.split("\n\nContext: ").next()?;
    let (_, list) = question.split_once(&format!("\n{LIST_HEADER}\n"))?;
    Some(
        list.lines()
            .map_while(|l| l.strip_prefix("- "))
            .map(str::to_string)
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScriptLine {
    #[serde(default)]
    prompt_hash: Option<String>,
    #[serde(default)]
    prompt: Option<String>,
    response: String,
}

/// Replays canned responses keyed by prompt hash, optionally falling back to
/// an [`EchoPolicy`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    responses: HashMap<String, String>,
    fallback: Option<EchoPolicy>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn echo(policy: EchoPolicy) -> Self {
        ScriptedLlm {
            responses: HashMap::new(),
            fallback: Some(policy),
        }
    }

    pub fn with_fallback(mut self, policy: Option<EchoPolicy>) -> Self {
        self.fallback = policy;
        self
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(prompt_hash(prompt), response.into());
    }

    pub fn insert_hash(&mut self, hash: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(hash.into(), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Reads `{"prompt_hash": ..., "response": ...}` or
    /// `{"prompt": ..., "response": ...}` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, LlmError> {
        let mut llm = ScriptedLlm::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LlmError::InvalidScript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptLine = serde_json::from_str(&line)
                .map_err(|e| LlmError::InvalidScript(format!("line {}: {e}", i + 1)))?;
            let hash = match (entry.prompt_hash, entry.prompt) {
                (Some(h), _) => h,
                (None, Some(p)) => prompt_hash(&p),
                (None, None) => {
                    return Err(LlmError::InvalidScript(format!(
                        "line {}: needs prompt_hash or prompt",
                        i + 1
                    )))
                }
            };
            llm.responses.insert(hash, entry.response);
        }
        Ok(llm)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path).map_err(|e| LlmError::InvalidScript(e.to_string()))?;
        Self::read(std::io::BufReader::new(file))
    }
}

impl LlmClient for ScriptedLlm {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        if let Some(resp) = self.responses.get(&hash) {
            return Ok(resp.clone());
        }
        match &self.fallback {
            Some(policy) => Ok(policy.respond(prompt)),
            None => Err(LlmError::NoScript(hash)),
        }
    }
}
