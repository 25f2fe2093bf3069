use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::{debug, warn};

use crate::lexicon::LexiconClient;

pub const ENV_BASE_URL: &str = "TOXI_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "TOXI_LLM_API_KEY";
pub const ENV_MODEL: &str = "TOXI_LLM_MODEL";
/// Base URLs with this prefix select the offline [`LexiconClient`].
pub const MOCK_SCHEME: &str = "mock://";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("client configuration: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            ClientError::Protocol(_) | ClientError::Config(_) => false,
        }
    }
}

/// One prompt. `id` is stable across retries so endpoints that honour
/// idempotency keys never bill a request twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub id: String,
    pub prompt: String,
}

impl ChatRequest {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest { id: id.into(), prompt: prompt.into() }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;

    fn model_id(&self) -> String;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }

    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }

    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay_ms: 500, max_delay_ms: 8_000 }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay_ms: 0, max_delay_ms: 0 }
    }

    /// Delay before retry number `attempt` (1-based): base·2^(attempt−1), capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Calls `client` until success, a non-retryable error, or the attempt budget
/// runs out.
pub fn with_retry(
    client: &dyn ChatClient,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<String, ClientError> {
    let mut attempt = 1;
    loop {
        match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < policy.max_attempts.max(1) => {
                let wait = policy.delay(attempt);
                warn!(request = %request.id, attempt, ?wait, "retrying after {e}");
                std::thread::sleep(wait);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Endpoint settings, usually read from the environment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClientConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub model: String,
}

impl ClientConfig {
    pub fn from_env() -> Result<Self, ClientError> {
        let base_url = std::env::var(ENV_BASE_URL)
            .map_err(|_| ClientError::Config(format!("{ENV_BASE_URL} is not set")))?;
        Ok(ClientConfig {
            base_url,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o-mini".to_string()),
        })
    }
}

pub fn build_client(config: &ClientConfig) -> Result<Box<dyn ChatClient>, ClientError> {
    if config.base_url.starts_with(MOCK_SCHEME) {
        return Ok(Box::new(LexiconClient::default()));
    }
    Ok(Box::new(OpenAiChatClient::new(config)?))
}

/// Client for any endpoint speaking the OpenAI chat-completions protocol.
pub struct OpenAiChatClient {
    url: String,
    api_key: Option<String>,
    model: String,
    http: reqwest::blocking::Client,
}

impl OpenAiChatClient {
    pub fn new(config: &ClientConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(OpenAiChatClient {
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key: config.api_key.clone(),
            model: config.model.clone(),
            http,
        })
    }
}

impl ChatClient for OpenAiChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let mut req = self
            .http
            .post(&self.url)
            .header("Idempotency-Key", &request.id)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        debug!(request = %request.id, url = %self.url, "chat completion");
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Http { status: status.as_u16(), body: text });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ClientError::Protocol(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("missing choices[0].message.content".into()))
    }

    fn model_id(&self) -> String {
        self.model.clone()
    }
}
