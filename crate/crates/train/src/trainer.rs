//! The fine-tuning loop: data preparation per experiment code, scheduled
//! loss weights, per-epoch logging, checkpointing and resume.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};
use toxi_core::cot::{parse_decision, Decision};
use toxi_core::jsonl::{self, JsonlError};
use toxi_core::taxonomy::{ClassBalance, LossMode, TrainTarget};
use toxi_core::ExperimentConfig;

use crate::backend::{write_json, BackendError, NativeBackend, TrainingBackend};
use crate::data::{carve_dev, format_example, order_batches, oversample, DataError, DifficultyKey, SftRecord};
use crate::loss::{token_weights, weighted_loss, LossError, LossWeights};
use crate::model::ModelConfig;
use crate::optim::OptimizerRegistry;
use crate::schedule::{cosine_lr, lambda_at, lambda_schedule, LambdaPoint, ScheduleError};
use crate::spans::{segment_spans, SegmentError, SpanSegmentation, ThinkMarkers};
use crate::tokenizer::WordTokenizer;

pub const STATE_FILE: &str = "state.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const SCHEDULE_FILE: &str = "schedule.jsonl";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("example {id}: {source}")]
    Segment { id: String, source: SegmentError },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("loss diverged at epoch {epoch}, step {step}; last good checkpoint is epoch {epoch_saved}")]
    Diverged { epoch: u32, step: usize, epoch_saved: u32 },
    #[error("checkpoint in {0} was written with a different configuration")]
    ConfigMismatch(PathBuf),
    #[error("no training example fits in {0} tokens")]
    NoExamples(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Low-rank adapter settings, passed through to backends that train
/// adapters. The native backend updates all of its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub rank: u32,
    pub alpha: f64,
    pub targets: Vec<String>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            rank: 8,
            alpha: 16.0,
            targets: ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub experiment: ExperimentConfig,
    pub epochs: u32,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub warmup_steps: usize,
    pub adapter: AdapterConfig,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub dev_fraction: f64,
    /// Interpolate λ within an epoch instead of changing it between epochs.
    pub per_batch_lambda: bool,
    /// Use λ proportional to span token counts (reproduces the standard loss).
    pub count_weighted_lambda: bool,
    /// Fold delimiters and other non-span completion tokens into r.
    pub supervise_scaffold: bool,
    pub max_new_tokens: usize,
    pub markers: ThinkMarkers,
    pub model: ModelConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            experiment: ExperimentConfig::default(),
            epochs: 3,
            learning_rate: 2e-4,
            lr_schedule: LrSchedule::Cosine,
            warmup_steps: 0,
            adapter: AdapterConfig::default(),
            batch_size: 8,
            max_seq_len: 512,
            dev_fraction: 0.1,
            per_batch_lambda: false,
            count_weighted_lambda: false,
            supervise_scaffold: true,
            max_new_tokens: 256,
            markers: ThinkMarkers::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainerConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(TrainError::Config(format!("dev_fraction {}", self.dev_fraction)));
        }
        if let Some((init, ratio)) = self.experiment.lambda() {
            lambda_schedule(1, init, ratio)?;
        }
        Ok(())
    }
}

/// One record per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    /// Mean reasoning-span loss; absent when no sequence has a reasoning span.
    pub l_r: Option<f64>,
    pub l_y: f64,
    /// Mean optimized sequence loss.
    pub loss: f64,
    /// Scheduled weights; absent in standard-loss and count-weighted modes.
    pub lambda_r: Option<f64>,
    pub lambda_y: Option<f64>,
    pub dev_accuracy: f64,
    pub dev_invalid: usize,
    pub dev_size: usize,
    pub sequences: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainState {
    completed_epochs: u32,
    step: usize,
    backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub checkpoint: PathBuf,
    pub backend: String,
    pub parameter_count: usize,
    pub train_examples: usize,
    pub dev_examples: usize,
    /// Examples dropped for exceeding the maximum sequence length.
    pub skipped: usize,
    /// Epochs already present in the checkpoint when the run started.
    pub resumed_epochs: u32,
    pub seconds: f64,
}

struct Example {
    ids: Vec<u32>,
    prompt_len: usize,
    seg: SpanSegmentation,
    key: DifficultyKey,
}

/// Native backend whose vocabulary covers every formatted example.
pub fn native_backend(
    config: &TrainerConfig,
    data: &[SftRecord],
    registry: &OptimizerRegistry,
) -> Result<NativeBackend, TrainError> {
    let mut texts = Vec::with_capacity(data.len());
    for r in data {
        let (p, c) = format_example(r, config.experiment.code.target)?;
        texts.push(format!("{p}{c}"));
    }
    let tok = WordTokenizer::fit(texts.iter().map(String::as_str));
    Ok(NativeBackend::new(tok, config.model.clone(), config.experiment.seed, &config.experiment.optimizer, registry)?)
}

fn prepare(
    config: &TrainerConfig,
    backend: &dyn TrainingBackend,
    records: &[SftRecord],
) -> Result<(Vec<Example>, usize), TrainError> {
    let target = config.experiment.code.target;
    let mut out = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for r in records {
        let (prompt, completion) = format_example(r, target)?;
        let mut tokens = vec![String::new()];
        tokens.extend(backend.tokenize(&prompt));
        let prompt_len = tokens.len();
        tokens.extend(backend.tokenize(&completion));
        if tokens.len() > config.max_seq_len {
            skipped += 1;
            continue;
        }
        let seg = match target {
            TrainTarget::Cot => {
                let seg = segment_spans(&tokens, prompt_len, &config.markers)
                    .map_err(|source| TrainError::Segment { id: r.id.clone(), source })?;
                if config.supervise_scaffold {
                    seg.with_scaffold_in_r()
                } else {
                    seg
                }
            }
            TrainTarget::Binary => SpanSegmentation::answer_only(prompt_len, tokens.len())
                .map_err(|source| TrainError::Segment { id: r.id.clone(), source })?,
        };
        let mut ids = backend.encode_tokens(&tokens[1..]);
        ids.insert(0, backend.bos());
        let score = r.annotation.as_ref().map(|a| a.score);
        let key = DifficultyKey::new(score, tokens.len() - prompt_len);
        out.push(Example { ids, prompt_len, seg, key });
    }
    if skipped > 0 {
        warn!(skipped, max_seq_len = config.max_seq_len, "examples longer than the maximum were dropped");
    }
    Ok((out, skipped))
}

fn prompt_ids(config: &TrainerConfig, backend: &dyn TrainingBackend, record: &SftRecord) -> Result<Vec<u32>, TrainError> {
    let (prompt, _) = format_example(record, config.experiment.code.target)?;
    let mut ids = vec![backend.bos()];
    ids.extend(backend.encode_tokens(&backend.tokenize(&prompt)));
    Ok(ids)
}

/// Greedy-decodes every dev prompt and scores the parsed decision. Returns
/// (accuracy, invalid count).
pub fn dev_accuracy(
    config: &TrainerConfig,
    backend: &dyn TrainingBackend,
    dev: &[SftRecord],
) -> Result<(f64, usize), TrainError> {
    if dev.is_empty() {
        return Ok((0.0, 0));
    }
    let max_new = match config.experiment.code.target {
        TrainTarget::Cot => config.max_new_tokens,
        TrainTarget::Binary => 1,
    };
    let mut correct = 0;
    let mut invalid = 0;
    for r in dev {
        let out = backend.generate(&prompt_ids(config, backend, r)?, max_new);
        match parse_decision(&backend.decode(&out)) {
            Decision::Invalid => invalid += 1,
            d if d.class() == Some(r.label) => correct += 1,
            _ => {}
        }
    }
    Ok((correct as f64 / dev.len() as f64, invalid))
}

fn weights_for(config: &TrainerConfig, seg: &SpanSegmentation, lambda: Option<(f64, f64)>) -> LossWeights {
    if config.count_weighted_lambda {
        return LossWeights::count_weighted(seg);
    }
    match lambda {
        Some((lambda_r, lambda_y)) => LossWeights::Dynamic { lambda_r, lambda_y },
        None => LossWeights::Standard,
    }
}

/// Runs (or resumes) training into `out_dir`.
///
/// The dev set is carved from `data` before balancing. A checkpoint is
/// written after every epoch; when `out_dir` already holds one written with
/// the same configuration, training continues after its last epoch.
pub fn train(
    config: &TrainerConfig,
    backend: &mut dyn TrainingBackend,
    data: &[SftRecord],
    out_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let started = Instant::now();
    let exp = &config.experiment;
    let (train_records, dev) = carve_dev(data, config.dev_fraction, exp.seed);
    let train_records = match exp.code.balance {
        ClassBalance::Oversampled => oversample(&train_records, |r| r.label, exp.seed)?,
        ClassBalance::Imbalanced => train_records,
    };
    let (examples, skipped) = prepare(config, backend, &train_records)?;
    if examples.is_empty() {
        return Err(TrainError::NoExamples(config.max_seq_len));
    }
    let keys: Vec<DifficultyKey> = examples.iter().map(|e| e.key).collect();
    let n_batches = examples.len().div_ceil(config.batch_size);
    let total_steps = n_batches * config.epochs as usize;

    std::fs::create_dir_all(out_dir).map_err(|source| JsonlError::Io { path: out_dir.to_path_buf(), source })?;
    let config_path = out_dir.join(CONFIG_FILE);
    let state_path = out_dir.join(STATE_FILE);
    let mut log: Vec<EpochLog> = Vec::new();
    let mut step = 0;
    let mut start_epoch = 1;
    if state_path.exists() {
        let saved: TrainerConfig = read(&config_path)?;
        if &saved != config {
            return Err(TrainError::ConfigMismatch(out_dir.to_path_buf()));
        }
        let state: TrainState = read(&state_path)?;
        backend.load(out_dir)?;
        log = jsonl::read_or_empty(out_dir.join(LOG_FILE))?;
        log.truncate(state.completed_epochs as usize);
        step = state.step;
        start_epoch = state.completed_epochs + 1;
        info!(completed = state.completed_epochs, "resuming from checkpoint");
    } else {
        write_json(&config_path, config)?;
    }
    let resumed_epochs = start_epoch - 1;
    info!(
        code = %exp.code,
        loss = ?exp.loss_mode,
        examples = examples.len(),
        dev = dev.len(),
        params = backend.parameter_count(),
        "training"
    );

    for epoch in start_epoch..=config.epochs {
        let lambda = exp.lambda().map(|(init, ratio)| lambda_schedule(epoch, init, ratio)).transpose()?;
        let order = order_batches(&keys, exp.code.ordering, exp.seed, epoch);
        let (mut sum_r, mut n_r, mut sum_y, mut sum_total) = (0.0, 0usize, 0.0, 0.0);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_lambda = match (config.per_batch_lambda, exp.lambda()) {
                (true, Some((init, ratio))) => {
                    Some(lambda_at(f64::from(epoch - 1) + b as f64 / n_batches as f64, init, ratio)?)
                }
                _ => lambda,
            };
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &examples[i];
                let w = weights_for(config, &ex.seg, batch_lambda);
                let mut tw = token_weights(ex.ids.len(), &ex.seg, w)?;
                tw.iter_mut().for_each(|v| *v *= scale);
                let losses = backend.accumulate_gradients(&ex.ids, ex.prompt_len, &tw);
                let seq = weighted_loss(&losses, &ex.seg, w)?;
                if !seq.total.is_finite() {
                    return Err(TrainError::Diverged { epoch, step, epoch_saved: epoch - 1 });
                }
                if let Some(l) = seq.l_r {
                    sum_r += l;
                    n_r += 1;
                }
                sum_y += seq.l_y;
                sum_total += seq.total;
            }
            let lr = match config.lr_schedule {
                LrSchedule::Cosine => cosine_lr(step, total_steps, config.warmup_steps, config.learning_rate),
                LrSchedule::Constant => config.learning_rate,
            };
            backend.optimizer_step(lr)?;
            step += 1;
        }
        let (acc, invalid) = dev_accuracy(config, backend, &dev)?;
        let n = examples.len() as f64;
        let explicit = if config.count_weighted_lambda { None } else { lambda };
        let entry = EpochLog {
            epoch,
            l_r: (n_r > 0).then(|| sum_r / n_r as f64),
            l_y: sum_y / n,
            loss: sum_total / n,
            lambda_r: explicit.map(|l| l.0),
            lambda_y: explicit.map(|l| l.1),
            dev_accuracy: acc,
            dev_invalid: invalid,
            dev_size: dev.len(),
            sequences: examples.len(),
            steps: n_batches,
        };
        info!(epoch, loss = entry.loss, l_y = entry.l_y, dev_accuracy = acc, "epoch done");
        log.push(entry);
        save_checkpoint(config, backend, out_dir, &log, step)?;
    }

    Ok(TrainOutcome {
        log,
        checkpoint: out_dir.to_path_buf(),
        backend: backend.name(),
        parameter_count: backend.parameter_count(),
        train_examples: examples.len(),
        dev_examples: dev.len(),
        skipped,
        resumed_epochs,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn save_checkpoint(
    config: &TrainerConfig,
    backend: &dyn TrainingBackend,
    dir: &Path,
    log: &[EpochLog],
    step: usize,
) -> Result<(), TrainError> {
    backend.save(dir)?;
    jsonl::write(dir.join(LOG_FILE), log)?;
    let trace: Vec<LambdaPoint> = log
        .iter()
        .filter_map(|e| Some(LambdaPoint { epoch: e.epoch, lambda_r: e.lambda_r?, lambda_y: e.lambda_y? }))
        .collect();
    jsonl::write(dir.join(SCHEDULE_FILE), &trace)?;
    let completed_epochs = log.last().map_or(0, |e| e.epoch);
    write_json(&dir.join(STATE_FILE), &TrainState { completed_epochs, step, backend: backend.name() })?;
    if completed_epochs == config.epochs {
        info!(dir = %dir.display(), "training complete");
    }
    Ok(())
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|source| JsonlError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
}

/// Loss mode label used in reports.
pub fn loss_mode_name(mode: LossMode) -> &'static str {
    match mode {
        LossMode::DynamicWeighted => "dynamic",
        LossMode::Standard => "standard",
    }
}
