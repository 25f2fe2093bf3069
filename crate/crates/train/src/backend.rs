//! The training backend interface and the built-in native implementation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, TinyLm};
use crate::optim::{clip_grad_norm, OptimError, Optimizer, OptimizerRegistry};
use crate::tokenizer::{split_tokens, WordTokenizer};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Optimizer(#[from] OptimError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: String, source: serde_json::Error },
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("weights {0} length does not match the model")]
    Shape(usize),
}

/// What a trainer needs from a model. Losses are always returned with one
/// entry per input token index.
pub trait TrainingBackend: Send {
    fn name(&self) -> String;
    fn tokenize(&self, text: &str) -> Vec<String>;
    fn encode_tokens(&self, tokens: &[String]) -> Vec<u32>;
    fn decode(&self, ids: &[u32]) -> String;
    fn bos(&self) -> u32;
    fn eos(&self) -> u32;
    fn parameter_count(&self) -> usize;
    /// Per-token negative log-likelihood, aligned to `ids`.
    fn token_losses(&self, ids: &[u32], prompt_len: usize) -> Vec<f64>;
    /// Accumulates the gradient of `sum_t weights[t] * loss_t` and returns
    /// the per-token losses.
    fn accumulate_gradients(&mut self, ids: &[u32], prompt_len: usize, weights: &[f64]) -> Vec<f64>;
    /// Applies and clears the accumulated gradient.
    fn optimizer_step(&mut self, lr: f64) -> Result<(), BackendError>;
    fn generate(&self, prompt: &[u32], max_new_tokens: usize) -> Vec<u32>;
    fn save(&self, dir: &Path) -> Result<(), BackendError>;
    fn load(&mut self, dir: &Path) -> Result<(), BackendError>;
}

pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const OPTIMIZER_FILE: &str = "optimizer.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedOptimizer {
    name: String,
    state: serde_json::Value,
}

/// [`TinyLm`] with a word tokenizer and a registry-built optimizer.
pub struct NativeBackend {
    tokenizer: WordTokenizer,
    model: TinyLm,
    optimizer: Box<dyn Optimizer>,
    grad: Vec<f64>,
    pub max_grad_norm: f64,
}

impl NativeBackend {
    pub fn new(
        tokenizer: WordTokenizer,
        config: ModelConfig,
        seed: u64,
        optimizer: &str,
        registry: &OptimizerRegistry,
    ) -> Result<Self, BackendError> {
        let model = TinyLm::new(tokenizer.vocab_size(), config, seed);
        let n = model.parameter_count();
        Ok(NativeBackend {
            tokenizer,
            model,
            optimizer: registry.build(optimizer, n)?,
            grad: vec![0.0; n],
            max_grad_norm: 1.0,
        })
    }

    /// Backend rebuilt from a checkpoint directory.
    pub fn open(dir: &Path, registry: &OptimizerRegistry) -> Result<Self, BackendError> {
        let tokenizer: WordTokenizer = read_json::<WordTokenizer>(&dir.join(TOKENIZER_FILE))?.reindex();
        let model: TinyLm = read_json(&dir.join(WEIGHTS_FILE))?;
        let opt: SavedOptimizer = read_json(&dir.join(OPTIMIZER_FILE))?;
        let n = model.parameter_count();
        let mut optimizer = registry.build(&opt.name, n)?;
        optimizer.load_state(opt.state)?;
        Ok(NativeBackend { tokenizer, model, optimizer, grad: vec![0.0; n], max_grad_norm: 1.0 })
    }

    pub fn tokenizer(&self) -> &WordTokenizer {
        &self.tokenizer
    }

    pub fn model(&self) -> &TinyLm {
        &self.model
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BackendError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| BackendError::Io { path: p.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| BackendError::Format { path: p, source })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BackendError> {
    let p = path.display().to_string();
    let text = serde_json::to_string(value).map_err(|source| BackendError::Format { path: p.clone(), source })?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|source| BackendError::Io { path: p, source })
}

impl TrainingBackend for NativeBackend {
    fn name(&self) -> String {
        format!("native-tinylm-{}p", self.model.parameter_count())
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        split_tokens(text)
    }

    fn encode_tokens(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.tokenizer.id(t)).collect()
    }

    fn decode(&self, ids: &[u32]) -> String {
        self.tokenizer.decode(ids)
    }

    fn bos(&self) -> u32 {
        self.tokenizer.bos()
    }

    fn eos(&self) -> u32 {
        self.tokenizer.eos()
    }

    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    fn token_losses(&self, ids: &[u32], prompt_len: usize) -> Vec<f64> {
        self.model.token_losses(ids, prompt_len)
    }

    fn accumulate_gradients(&mut self, ids: &[u32], prompt_len: usize, weights: &[f64]) -> Vec<f64> {
        self.model.accumulate(ids, prompt_len, weights, &mut self.grad)
    }

    fn optimizer_step(&mut self, lr: f64) -> Result<(), BackendError> {
        clip_grad_norm(&mut self.grad, self.max_grad_norm);
        self.optimizer.step(&mut self.model.params, &self.grad, lr);
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        Ok(())
    }

    fn generate(&self, prompt: &[u32], max_new_tokens: usize) -> Vec<u32> {
        self.model.generate(prompt, max_new_tokens, self.tokenizer.eos())
    }

    fn save(&self, dir: &Path) -> Result<(), BackendError> {
        std::fs::create_dir_all(dir)
            .map_err(|source| BackendError::Io { path: dir.display().to_string(), source })?;
        write_json(&dir.join(TOKENIZER_FILE), &self.tokenizer)?;
        write_json(&dir.join(WEIGHTS_FILE), &self.model)?;
        let opt = SavedOptimizer { name: self.optimizer.name().to_string(), state: self.optimizer.state() };
        write_json(&dir.join(OPTIMIZER_FILE), &opt)
    }

    fn load(&mut self, dir: &Path) -> Result<(), BackendError> {
        let tokenizer: WordTokenizer = read_json::<WordTokenizer>(&dir.join(TOKENIZER_FILE))?.reindex();
        if tokenizer != self.tokenizer {
            return Err(BackendError::Mismatch("tokenizer vocabulary differs".into()));
        }
        let model: TinyLm = read_json(&dir.join(WEIGHTS_FILE))?;
        if model.parameter_count() != self.model.parameter_count() || model.config != self.model.config {
            return Err(BackendError::Shape(model.parameter_count()));
        }
        let opt: SavedOptimizer = read_json(&dir.join(OPTIMIZER_FILE))?;
        if opt.name != self.optimizer.name() {
            return Err(BackendError::Mismatch(format!("optimizer {} vs {}", opt.name, self.optimizer.name())));
        }
        self.optimizer.load_state(opt.state)?;
        self.model = model;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        Ok(())
    }
}
