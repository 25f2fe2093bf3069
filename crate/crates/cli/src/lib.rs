//! `toxi`: one entry point for every pipeline stage.
//!
//! Stages read and write under `--data`; each completed stage is recorded in
//! `manifest.json` with the hashes of its inputs, configuration and outputs,
//! and a rerun with nothing changed is skipped.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Parser, Subcommand};

pub mod config;
mod evaluate;
pub mod manifest;
mod pipeline;
mod training;

pub use config::ToxiConfig;
pub use manifest::{PipelineManifest, StageKey, MANIFEST_FILE};

pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const PREANNOTATED_FILE: &str = "preannotated.jsonl";
pub const STORE_DIR: &str = "store";
pub const SPLIT_DIR: &str = "split";
pub const TRAIN_SPLIT: &str = "train.jsonl";
pub const BENCH_SPLIT: &str = "bench.jsonl";
pub const RUNS_DIR: &str = "runs";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Parser)]
#[command(name = "toxi", version, about = "Toxicity annotation, fine-tuning and evaluation pipeline")]
pub struct Cli {
    /// Working directory holding every stage's inputs and outputs.
    #[arg(long, global = true, env = "TOXI_DATA", default_value = "data")]
    pub data: PathBuf,
    /// Seed for every random choice (splits, training, exemplar selection).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(short, long, global = true)]
    pub verbose: bool,
    /// Rerun a stage even when its manifest entry is current.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Anonymize, scrub, deduplicate and length-filter a raw dump.
    Ingest(pipeline::IngestArgs),
    /// Run the chain-of-thought pre-annotation and queue what needs review.
    Preannotate(pipeline::PreannotateArgs),
    /// Check the auto-label rule against human labels.
    ValidateRule(pipeline::ValidateArgs),
    /// Serve the annotation queue over HTTP.
    Serve(pipeline::ServeArgs),
    /// Carve the balanced benchmark out of the labeled corpus.
    Split(pipeline::SplitArgs),
    /// Fine-tune a model on the train split.
    Train(training::TrainArgs),
    /// Evaluate a model on the benchmark.
    Eval(evaluate::EvalArgs),
    /// Translate a labeled subset and optionally evaluate on it.
    Xlingual(evaluate::XlingualArgs),
    /// Collect evaluation results into one report.
    Report(evaluate::ReportArgs),
}

/// Shared state of one invocation.
pub struct Context {
    pub data: PathBuf,
    pub seed: u64,
    pub config: ToxiConfig,
    pub force: bool,
}

impl Context {
    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.data.join(rel)
    }

    /// Runs `body` unless the manifest says the stage is current, then
    /// records its outputs.
    pub(crate) fn stage(
        &self,
        key: StageKey,
        outputs: &[&Path],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<bool> {
        if !self.force && PipelineManifest::load(&self.data)?.is_current(&key) {
            println!("{}: up to date", key.name);
            return Ok(false);
        }
        body()?;
        let mut manifest = PipelineManifest::load(&self.data)?;
        manifest.record(key, outputs)?;
        manifest.save(&self.data)?;
        Ok(true)
    }
}

fn init_tracing(verbose: bool) {
    let default = if verbose { "debug" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_env("TOXI_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    init_tracing(cli.verbose);
    let ctx = Context {
        config: ToxiConfig::load(cli.config.as_deref())?,
        data: cli.data,
        seed: cli.seed,
        force: cli.force,
    };
    match cli.command {
        Command::Ingest(a) => pipeline::ingest(&ctx, a),
        Command::Preannotate(a) => pipeline::preannotate(&ctx, a),
        Command::ValidateRule(a) => pipeline::validate(&ctx, a),
        Command::Serve(a) => pipeline::serve(&ctx, a),
        Command::Split(a) => pipeline::split(&ctx, a),
        Command::Train(a) => training::train(&ctx, a),
        Command::Eval(a) => evaluate::eval(&ctx, a),
        Command::Xlingual(a) => evaluate::xlingual(&ctx, a),
        Command::Report(a) => evaluate::report(&ctx, a),
    }
}

/// Parses `args` and runs the command: 0 on success, 1 on a pipeline error,
/// 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
