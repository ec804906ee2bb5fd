//! Chat completion providers: an OpenAI-compatible HTTP client and a
//! deterministic replay file for tests and offline evaluation.

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Serialize, Deserialize)]
pub enum LlmError {
    #[error("provider error ({}): {detail}", if *transient { "transient" } else { "fatal" })]
    Provider { transient: bool, detail: String },
    #[error("replay file has no applicable entry")]
    ReplayExhausted,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn is_fatal(&self) -> bool {
        !matches!(self, LlmError::Provider { transient: true, .. })
    }
}

/// One conversation's view of a provider. Implementations may keep
/// per-session state (the replay cursor), so sessions own their client.
pub trait LlmClient: Send {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    match messages.first() {
        None => Err(LlmError::InvalidRequest("no messages".into())),
        Some(m) if m.role == Role::Assistant => {
            Err(LlmError::InvalidRequest("first message must be system or user".into()))
        }
        _ if messages.iter().any(|m| m.content.is_empty()) => {
            Err(LlmError::InvalidRequest("empty message content".into()))
        }
        _ => Ok(()),
    }
}

/// FNV-1a over the concatenated message contents, as 16 lower-case hex digits.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let mut bytes = Vec::new();
    for m in messages {
        bytes.extend_from_slice(m.content.as_bytes());
    }
    format!("{:016x}", crate::fnv1a64(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplayKey {
    Hash(String),
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub key: ReplayKey,
    pub response: String,
}

/// Parsed replay fixture: `--- KEY <hex|*> ---` blocks, each followed by the
/// response text up to the next delimiter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFile {
    pub entries: Vec<ReplayEntry>,
}

fn replay_delimiter(line: &str) -> Option<&str> {
    line.trim_end()
        .strip_prefix("--- KEY ")?
        .strip_suffix(" ---")
        .map(str::trim)
}

impl ReplayFile {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        let mut current: Option<(ReplayKey, Vec<&str>)> = None;
        for (i, line) in text.lines().enumerate() {
            if let Some(key) = replay_delimiter(line) {
                if let Some((k, body)) = current.take() {
                    entries.push(ReplayEntry { key: k, response: body.join("\n").trim().to_string() });
                }
                let key = match key {
                    "*" => ReplayKey::Any,
                    hex if !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit()) => {
                        ReplayKey::Hash(hex.to_ascii_lowercase())
                    }
                    other => {
                        return Err(LlmError::InvalidRequest(format!(
                            "replay line {}: bad key `{other}`",
                            i + 1
                        )))
                    }
                };
                current = Some((key, Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            } else if !line.trim().is_empty() {
                return Err(LlmError::InvalidRequest(format!(
                    "replay line {}: text before the first KEY delimiter",
                    i + 1
                )));
            }
        }
        if let Some((k, body)) = current {
            entries.push(ReplayEntry { key: k, response: body.join("\n").trim().to_string() });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Provider {
            transient: false,
            detail: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }
}

/// A session over a shared replay file. Hash-keyed entries win; otherwise the
/// next unconsumed `*` entry in file order is returned. The cursor is private
/// to this client, so concurrent sessions never interleave fixtures.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    file: Arc<ReplayFile>,
    consumed: HashSet<usize>,
}

impl ReplayClient {
    pub fn new(file: Arc<ReplayFile>) -> Self {
        Self { file, consumed: HashSet::new() }
    }
}

impl LlmClient for ReplayClient {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        let hash = prompt_hash(messages);
        let entries = &self.file.entries;
        let keyed: Vec<usize> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key == ReplayKey::Hash(hash.clone()))
            .map(|(i, _)| i)
            .collect();
        let pick = keyed
            .iter()
            .copied()
            .find(|i| !self.consumed.contains(i))
            .or_else(|| keyed.last().copied())
            .or_else(|| {
                entries
                    .iter()
                    .enumerate()
                    .find(|(i, e)| e.key == ReplayKey::Any && !self.consumed.contains(i))
                    .map(|(i, _)| i)
            })
            .ok_or(LlmError::ReplayExhausted)?;
        self.consumed.insert(pick);
        Ok(entries[pick].response.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "ProviderConfig::default_key_var")]
    pub api_key_env_var: String,
    #[serde(default = "ProviderConfig::default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub replay_path: Option<PathBuf>,
    #[serde(default)]
    pub temperature: f64,
}

pub const DEFAULT_API_KEY_VAR: &str = "SIMLOOP_API_KEY";

impl ProviderConfig {
    fn default_key_var() -> String {
        DEFAULT_API_KEY_VAR.to_string()
    }

    fn default_timeout() -> u64 {
        60
    }

    pub fn replay(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Replay,
            base_url: None,
            model_name: None,
            api_key_env_var: Self::default_key_var(),
            timeout_s: Self::default_timeout(),
            replay_path: Some(path.into()),
            temperature: 0.0,
        }
    }

    pub fn http(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Http,
            base_url: Some(base_url.into()),
            model_name: Some(model.into()),
            api_key_env_var: Self::default_key_var(),
            timeout_s: Self::default_timeout(),
            replay_path: None,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            ProviderKind::Http if self.base_url.is_none() => Err("http provider needs base_url".into()),
            ProviderKind::Http if self.model_name.is_none() => {
                Err("http provider needs model_name".into())
            }
            ProviderKind::Replay if self.replay_path.is_none() => {
                Err("replay provider needs replay_path".into())
            }
            _ => Ok(()),
        }
    }
}

pub const RETRY_DELAYS: [Duration; 3] =
    [Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)];

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpClient {
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    retry_delays: Vec<Duration>,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(config: &ProviderConfig) -> Result<Self, LlmError> {
        config.validate().map_err(LlmError::InvalidRequest)?;
        let base = config.base_url.as_deref().unwrap_or_default().trim_end_matches('/');
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint: format!("{base}/chat/completions"),
            model: config.model_name.clone().unwrap_or_default(),
            temperature: config.temperature,
            api_key: std::env::var(&config.api_key_env_var).ok(),
            retry_delays: RETRY_DELAYS.to_vec(),
            agent,
        })
    }

    /// Overrides the backoff schedule (one retry per delay).
    pub fn with_retry_delays(mut self, delays: Vec<Duration>) -> Self {
        self.retry_delays = delays;
        self
    }

    fn attempt(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": messages,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| LlmError::Provider {
            transient: true,
            detail: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(LlmError::Provider { transient: true, detail: format!("status {status}") });
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(LlmError::Provider {
                transient: false,
                detail: format!("status {status}: {text}"),
            });
        }
        let json: serde_json::Value = resp.body_mut().read_json().map_err(|e| LlmError::Provider {
            transient: false,
            detail: format!("bad response body: {e}"),
        })?;
        json.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::Provider {
                transient: false,
                detail: "response lacks choices[0].message.content".into(),
            })
    }
}

impl LlmClient for HttpClient {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        let mut delays = self.retry_delays.iter();
        loop {
            match self.attempt(messages) {
                Err(e @ LlmError::Provider { transient: true, .. }) => match delays.next() {
                    Some(d) => {
                        log::warn!("transient provider failure, retrying in {d:?}: {e}");
                        std::thread::sleep(*d);
                    }
                    None => return Err(e),
                },
                other => return other,
            }
        }
    }
}
