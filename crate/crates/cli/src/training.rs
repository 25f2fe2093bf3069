//! The `train` subcommand.

use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::Args;
use toxi_core::jsonl;
use toxi_core::stats::{format_ratio, TextTable};
use toxi_core::taxonomy::{ExperimentCode, LossMode};
use toxi_train::trainer::loss_mode_name;
use toxi_train::{native_backend, synthetic_corpus, train as run_training, OptimizerRegistry, SftRecord, TrainerConfig};

use crate::{Context, StageKey, RUNS_DIR, SPLIT_DIR, TRAIN_SPLIT};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment code: ordering (r|o), balance (e|d), target (c|b).
    #[arg(long)]
    pub code: Option<ExperimentCode>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long, value_parser = parse_loss_mode)]
    pub loss: Option<LossMode>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Defaults to `<data>/split/train.jsonl`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Train on N synthetic examples instead of a split.
    #[arg(long, conflicts_with = "train")]
    pub synthetic: Option<usize>,
    /// Checkpoint directory; defaults to `<data>/runs/<code>-<loss>-s<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_loss_mode(s: &str) -> Result<LossMode, String> {
    match s {
        "dynamic" => Ok(LossMode::DynamicWeighted),
        "standard" => Ok(LossMode::Standard),
        other => Err(format!("unknown loss {other:?} (expected dynamic or standard)")),
    }
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let mut config: TrainerConfig = ctx.config.train.clone();
    if let Some(code) = args.code {
        config.experiment.code = code;
    }
    if let Some(opt) = args.optimizer {
        config.experiment.optimizer = opt;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(l) = args.loss {
        config.experiment.loss_mode = l;
    }
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }
    config.experiment.seed = ctx.seed;
    let exp = &config.experiment;
    let out = args.out.unwrap_or_else(|| {
        ctx.path(RUNS_DIR).join(format!("{}-{}-s{}", exp.code, loss_mode_name(exp.loss_mode), exp.seed))
    });

    let (data, inputs): (Vec<SftRecord>, Vec<PathBuf>) = match args.synthetic {
        Some(n) => (synthetic_corpus(n, 0.3, ctx.seed), Vec::new()),
        None => {
            let path = args.train.unwrap_or_else(|| ctx.path(SPLIT_DIR).join(TRAIN_SPLIT));
            let data = jsonl::read(&path).with_context(|| format!("reading train split {}", path.display()))?;
            (data, vec![path])
        }
    };
    let input_refs: Vec<&std::path::Path> = inputs.iter().map(PathBuf::as_path).collect();
    let stage = format!("train:{}", out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    let key = StageKey::new(stage, &input_refs, &(&config, args.synthetic), Some(ctx.seed))?;
    ctx.stage(key, &[&out], || {
        let registry = OptimizerRegistry::default();
        let mut backend = native_backend(&config, &data, &registry)?;
        let outcome = run_training(&config, &mut backend, &data, &out)?;
        let mut table = TextTable::new(["Epoch", "λ_r", "λ_y", "L_r", "L_y", "Loss", "Dev acc", "Invalid"]);
        let opt = |v: Option<f64>| v.map(format_ratio).unwrap_or_else(|| "-".into());
        for e in &outcome.log {
            table.push([
                e.epoch.to_string(),
                opt(e.lambda_r),
                opt(e.lambda_y),
                opt(e.l_r),
                format_ratio(e.l_y),
                format_ratio(e.loss),
                format_ratio(e.dev_accuracy),
                e.dev_invalid.to_string(),
            ]);
        }
        println!(
            "train {}: {} params, {} train / {} dev examples, {} skipped, {:.1}s",
            config.experiment.code,
            outcome.parameter_count,
            outcome.train_examples,
            outcome.dev_examples,
            outcome.skipped,
            outcome.seconds
        );
        print!("{}", table.render());
        println!("checkpoint: {}", outcome.checkpoint.display());
        Ok(())
    })?;
    Ok(())
}
