//! Supervised fine-tuning on chain-of-thought annotations.
//!
//! The loss splits every completion into a reasoning span and an answer span
//! and weights their token means with an epoch schedule. Training runs
//! through the [`TrainingBackend`] trait; [`NativeBackend`] is a small
//! pure-Rust causal LM that trains on a CPU in seconds.

#![allow(clippy::single_range_in_vec_init)]

pub mod backend;
pub mod data;
pub mod loss;
pub mod model;
pub mod optim;
pub mod schedule;
pub mod spans;
pub mod tokenizer;
pub mod trainer;

pub use backend::{BackendError, NativeBackend, TrainingBackend};
pub use data::{
    carve_dev, format_binary_prompt, format_example, format_prompt, order_batches, oversample,
    synthetic_corpus, DataError, DifficultyKey, SftRecord,
};
pub use loss::{token_weights, weighted_loss, LossError, LossWeights, SequenceLoss};
pub use model::{ModelConfig, TinyLm};
pub use optim::{Optimizer, OptimizerRegistry, PLUGIN};
pub use schedule::{cosine_lr, lambda_at, lambda_schedule, lambda_trace, LambdaPoint, ScheduleError};
pub use spans::{segment_spans, SegmentError, SpanSegmentation, ThinkMarkers};
pub use trainer::{
    dev_accuracy, native_backend, train, AdapterConfig, EpochLog, LrSchedule, TrainError, TrainOutcome,
    TrainerConfig,
};
