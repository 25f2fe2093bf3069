//! Models under evaluation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toxi_core::taxonomy::TrainTarget;
use toxi_core::ToxicityClass;
use toxi_preannotate::{with_retry, ChatClient, ChatRequest, ClientError, RetryPolicy};
use toxi_train::backend::WEIGHTS_FILE;
use toxi_train::trainer::CONFIG_FILE;
use toxi_train::{format_binary_prompt, format_prompt, NativeBackend, OptimizerRegistry, TrainerConfig, TrainingBackend};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("no oracle label for {0}")]
    UnknownItem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    LocalCheckpoint,
    ChatEndpoint,
    ModerationEndpoint,
    Reference,
}

/// One benchmark item as seen by an adapter.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
    /// ICL prompt built for this item; adapters with their own input format
    /// ignore it.
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterOutput {
    pub raw: String,
    /// Probability of the toxic class, when the model exposes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl AdapterOutput {
    pub fn text(raw: impl Into<String>) -> Self {
        AdapterOutput { raw: raw.into(), confidence: None }
    }
}

/// A model that answers one item at a time and keeps no state between calls.
pub trait ModelAdapter: Send + Sync {
    fn name(&self) -> String;
    fn kind(&self) -> AdapterKind;
    /// Whether the ICL prompt configuration affects the output.
    fn uses_prompt(&self) -> bool {
        true
    }
    fn invoke(&self, input: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError>;
}

/// Sends the ICL prompt to a chat endpoint.
pub struct ChatAdapter<C> {
    client: C,
    retry: RetryPolicy,
}

impl<C: ChatClient> ChatAdapter<C> {
    pub fn new(client: C, retry: RetryPolicy) -> Self {
        ChatAdapter { client, retry }
    }
}

impl<C: ChatClient> ModelAdapter for ChatAdapter<C> {
    fn name(&self) -> String {
        self.client.model_id()
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::ChatEndpoint
    }

    fn invoke(&self, input: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        let request = ChatRequest::new(format!("eval:{}", input.id), input.prompt);
        Ok(AdapterOutput::text(with_retry(&self.client, &request, &self.retry)?))
    }
}

/// Scores a comment in [0, 1]; higher is more toxic.
pub trait ModerationScorer: Send + Sync {
    fn model_id(&self) -> String;
    fn score(&self, text: &str) -> Result<f64, ClientError>;
}

/// Moderation endpoint speaking the OpenAI moderation protocol; the score
/// is the highest category score.
pub struct OpenAiModeration {
    url: String,
    api_key: Option<String>,
    model: String,
    http: reqwest::blocking::Client,
}

impl OpenAiModeration {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(OpenAiModeration {
            url: format!("{}/moderations", base_url.trim_end_matches('/')),
            api_key,
            model: model.to_string(),
            http,
        })
    }
}

impl ModerationScorer for OpenAiModeration {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn score(&self, text: &str) -> Result<f64, ClientError> {
        let mut req = self.http.post(&self.url).json(&json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Http { status: status.as_u16(), body });
        }
        let value: serde_json::Value = serde_json::from_str(&body).map_err(|e| ClientError::Protocol(e.to_string()))?;
        let scores = value["results"][0]["category_scores"]
            .as_object()
            .ok_or_else(|| ClientError::Protocol("missing results[0].category_scores".into()))?;
        scores
            .values()
            .filter_map(serde_json::Value::as_f64)
            .reduce(f64::max)
            .ok_or_else(|| ClientError::Protocol("no numeric category score".into()))
    }
}

pub const DEFAULT_MODERATION_THRESHOLD: f64 = 0.5;

/// Turns a moderation score into an answer: toxic at or above the threshold.
pub struct ModerationAdapter<S> {
    scorer: S,
    pub threshold: f64,
}

impl<S: ModerationScorer> ModerationAdapter<S> {
    pub fn new(scorer: S) -> Self {
        ModerationAdapter { scorer, threshold: DEFAULT_MODERATION_THRESHOLD }
    }

    pub fn with_threshold(scorer: S, threshold: f64) -> Self {
        ModerationAdapter { scorer, threshold }
    }
}

impl<S: ModerationScorer> ModelAdapter for ModerationAdapter<S> {
    fn name(&self) -> String {
        format!("{}@{}", self.scorer.model_id(), self.threshold)
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::ModerationEndpoint
    }

    fn uses_prompt(&self) -> bool {
        false
    }

    fn invoke(&self, input: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        let score = self.scorer.score(input.text)?;
        let class = if score >= self.threshold { ToxicityClass::Toxic } else { ToxicityClass::NonToxic };
        Ok(AdapterOutput { raw: class.answer_fr().to_string(), confidence: Some(score) })
    }
}

/// Always gives the same answer.
pub struct ConstantAdapter(pub ToxicityClass);

impl ModelAdapter for ConstantAdapter {
    fn name(&self) -> String {
        format!("constant-{}", self.0)
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Reference
    }

    fn uses_prompt(&self) -> bool {
        false
    }

    fn invoke(&self, _: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        Ok(AdapterOutput::text(self.0.answer_fr()))
    }
}

/// Answers with the gold label of each item.
pub struct OracleAdapter(pub HashMap<String, ToxicityClass>);

impl OracleAdapter {
    pub fn from_items<'a>(items: impl IntoIterator<Item = (&'a str, ToxicityClass)>) -> Self {
        OracleAdapter(items.into_iter().map(|(id, c)| (id.to_string(), c)).collect())
    }
}

impl ModelAdapter for OracleAdapter {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Reference
    }

    fn uses_prompt(&self) -> bool {
        false
    }

    fn invoke(&self, input: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        let class = self.0.get(input.id).ok_or_else(|| AdapterError::UnknownItem(input.id.to_string()))?;
        Ok(AdapterOutput::text(class.answer_fr()))
    }
}

/// A fine-tuned checkpoint written by the trainer, prompted the way it was
/// trained.
pub struct CheckpointAdapter {
    name: String,
    backend: NativeBackend,
    target: TrainTarget,
    max_new_tokens: usize,
}

impl CheckpointAdapter {
    pub fn open(dir: &Path, registry: &OptimizerRegistry) -> Result<Self, AdapterError> {
        let err = |message: String| AdapterError::Checkpoint { path: dir.to_path_buf(), message };
        let text = std::fs::read_to_string(dir.join(CONFIG_FILE)).map_err(|e| err(e.to_string()))?;
        let config: TrainerConfig = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let backend = NativeBackend::open(dir, registry).map_err(|e| err(e.to_string()))?;
        let weights = std::fs::read(dir.join(WEIGHTS_FILE)).map_err(|e| err(e.to_string()))?;
        let digest = hex::encode(&Sha256::digest(&weights)[..4]);
        let name = format!(
            "{}-{}-s{}@{digest}",
            config.experiment.code,
            toxi_train::trainer::loss_mode_name(config.experiment.loss_mode),
            config.experiment.seed
        );
        Ok(CheckpointAdapter {
            name,
            backend,
            target: config.experiment.code.target,
            max_new_tokens: config.max_new_tokens,
        })
    }
}

impl ModelAdapter for CheckpointAdapter {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::LocalCheckpoint
    }

    fn uses_prompt(&self) -> bool {
        false
    }

    fn invoke(&self, input: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        let (prompt, max_new) = match self.target {
            TrainTarget::Cot => (format_prompt(input.text), self.max_new_tokens),
            TrainTarget::Binary => (format_binary_prompt(input.text), 1),
        };
        let mut ids = vec![self.backend.bos()];
        ids.extend(self.backend.encode_tokens(&self.backend.tokenize(&prompt)));
        let out = self.backend.generate(&ids, max_new);
        Ok(AdapterOutput::text(self.backend.decode(&out)))
    }
}
