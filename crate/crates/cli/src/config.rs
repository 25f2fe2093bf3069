//! Optional TOML configuration shared by the subcommands. Flags override it.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use toxi_eval::InvalidPolicy;
use toxi_preannotate::RetryPolicy;
use toxi_service::StoreConfig;
use toxi_train::TrainerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToxiConfig {
    pub ingest: IngestSection,
    pub preannotate: PreannotateSection,
    pub store: StoreConfig,
    pub train: TrainerConfig,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    /// Hex salt for anonymous ids; `TOXI_SALT` or `--salt` take precedence.
    pub salt: Option<String>,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            salt: None,
            min_words: toxi_core::corpus::DEFAULT_MIN_WORDS,
            max_words: toxi_core::corpus::DEFAULT_MAX_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreannotateSection {
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for PreannotateSection {
    fn default() -> Self {
        PreannotateSection { max_concurrency: 4, retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub k: usize,
    pub invalid_policy: InvalidPolicy,
    pub moderation_threshold: f64,
    pub max_concurrency: usize,
    pub misclassified: usize,
    pub retry: RetryPolicy,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 4,
            invalid_policy: InvalidPolicy::AsNonToxic,
            moderation_threshold: toxi_eval::adapter::DEFAULT_MODERATION_THRESHOLD,
            max_concurrency: 4,
            misclassified: 5,
            retry: RetryPolicy::default(),
        }
    }
}

impl ToxiConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(ToxiConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
