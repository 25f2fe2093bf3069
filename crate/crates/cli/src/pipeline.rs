//! Corpus, pre-annotation, review queue and split stages.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context as _, Result};
use clap::Args;
use serde::Serialize;
use toxi_core::corpus::{ingest as ingest_records, parse_salt, CommentRecord, ConstantSignal, IngestConfig, RawRecord, WordBounds};
use toxi_core::cot::prompts::prompt_set_hash;
use toxi_core::jsonl;
use toxi_core::stats::format_percent;
use toxi_eval::BenchItem;
use toxi_preannotate::{
    build_client, load_preannotated, run_preannotation, validate_rule, ClientConfig, RuleSample, RunConfig,
};
use toxi_service::{split_dataset, AnnotationStore, SystemClock};
use toxi_train::SftRecord;

use crate::{Context, StageKey, BENCH_SPLIT, COMMENTS_FILE, PREANNOTATED_FILE, SPLIT_DIR, STORE_DIR, TRAIN_SPLIT};

pub const SALT_ENV: &str = "TOXI_SALT";

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw dump, one record per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to `<data>/comments.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hex salt for anonymous ids.
    #[arg(long, env = SALT_ENV, hide_env_values = true)]
    pub salt: Option<String>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
}

pub fn ingest(ctx: &Context, args: IngestArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| ctx.path(COMMENTS_FILE));
    let section = &ctx.config.ingest;
    let salt_hex = args
        .salt
        .or_else(|| section.salt.clone())
        .with_context(|| format!("no salt: pass --salt, set {SALT_ENV} or ingest.salt"))?;
    let salt = parse_salt(&salt_hex)?;
    let bounds = WordBounds::new(args.min_words.unwrap_or(section.min_words), args.max_words.unwrap_or(section.max_words))?;
    let report_path = out.with_extension("report.json");
    // The salt enters the key only through its hash.
    let key = StageKey::new("ingest", &[&args.input], &(&salt_hex, bounds.min, bounds.max), None)?;
    ctx.stage(key, &[&out, &report_path], || {
        let raw: Vec<RawRecord> = jsonl::read(&args.input)?;
        let (records, report) = ingest_records(&raw, &IngestConfig { salt, bounds }, &ConstantSignal::default())?;
        jsonl::write(&out, &records)?;
        write_json(&report_path, &report)?;
        println!(
            "ingest: {} read, {} empty, {} after dedupe, {} too short, {} too long, {} kept, {} redactions",
            report.ingested,
            report.empty_text,
            report.after_dedupe,
            report.too_short,
            report.too_long,
            report.retained,
            report.redactions.total()
        );
        Ok(())
    })?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct PreannotateArgs {
    /// Defaults to `<data>/comments.jsonl`.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Defaults to `<data>/preannotated.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_concurrency: Option<usize>,
    /// Keep earlier results and only annotate missing or failed comments.
    #[arg(long)]
    pub resume: bool,
}

pub fn preannotate(ctx: &Context, args: PreannotateArgs) -> Result<()> {
    let input = args.input.unwrap_or_else(|| ctx.path(COMMENTS_FILE));
    let out = args.out.unwrap_or_else(|| ctx.path(PREANNOTATED_FILE));
    let client_config = ClientConfig::from_env()?;
    let run_config = RunConfig {
        max_concurrency: args.max_concurrency.unwrap_or(ctx.config.preannotate.max_concurrency),
        retry: ctx.config.preannotate.retry,
        resume: args.resume,
    };
    let key = StageKey::new(
        "preannotate",
        &[&input],
        &(&client_config.base_url, &client_config.model, prompt_set_hash()),
        None,
    )?;
    ctx.stage(key, &[&out], || {
        let batch: Vec<CommentRecord> = jsonl::read(&input)?;
        let client = build_client(&client_config)?;
        let outcome = run_preannotation(&batch, client.as_ref(), &out, &run_config)?;
        let s = &outcome.summary;
        println!(
            "preannotate: {} comments, {} annotated, {} failed, {} auto-labeled ({}), {} queued ({})",
            s.total,
            s.annotated,
            s.failed,
            s.auto_labeled,
            format_percent(s.auto_fraction),
            s.needs_human,
            format_percent(s.queue_fraction)
        );
        Ok(())
    })?;
    // Queueing is idempotent, so it runs even when annotation was skipped.
    let mut store = open_store(ctx)?;
    let added = store.import(&load_preannotated(&out)?)?;
    let progress = store.progress();
    println!(
        "queue: {added} new items, {} auto-labeled, {} awaiting review",
        progress.auto_labeled,
        progress.remaining
    );
    Ok(())
}

pub fn open_store(ctx: &Context) -> Result<AnnotationStore> {
    let dir = ctx.path(STORE_DIR);
    std::fs::create_dir_all(&dir)?;
    Ok(AnnotationStore::open(&dir, Arc::new(SystemClock), ctx.config.store)?)
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Human-labeled sample: one `{id, score, decision, human}` per line.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Defaults to `<data>/rule_validation.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn validate(ctx: &Context, args: ValidateArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| ctx.path("rule_validation.json"));
    let key = StageKey::new("validate-rule", &[&args.samples], &args.alpha.to_bits(), None)?;
    ctx.stage(key, &[&out], || {
        let samples: Vec<RuleSample> = jsonl::read(&args.samples)?;
        let v = validate_rule(&samples, args.alpha)?;
        write_json(&out, &v)?;
        println!(
            "validate-rule: {}/{} auto-labeled comments confirmed non-toxic = {} [{}, {}] at {:.0}% confidence; {} sampled",
            v.agreeing,
            v.auto_labeled,
            format_percent(v.agreement),
            format_percent(v.interval.lo),
            format_percent(v.interval.hi),
            (1.0 - v.alpha) * 100.0,
            v.sample_size
        );
        for id in &v.misses {
            println!("  missed toxic: {id}");
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Annotators to register before serving.
    #[arg(long = "annotator")]
    pub annotators: Vec<String>,
}

pub fn serve(ctx: &Context, args: ServeArgs) -> Result<()> {
    let mut store = open_store(ctx)?;
    for a in &args.annotators {
        store.register_annotator(a)?;
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("invalid --host/--port")?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    println!("serve: listening on http://{addr}");
    runtime.block_on(toxi_service::serve(Arc::new(Mutex::new(store)), addr))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 150)]
    pub bench_per_class: usize,
}

pub fn split(ctx: &Context, args: SplitArgs) -> Result<()> {
    let store_log = ctx.path(STORE_DIR).join(toxi_service::EVENT_LOG);
    if !store_log.exists() {
        bail!("no annotation store at {}; run preannotate first", store_log.display());
    }
    let dir = ctx.path(SPLIT_DIR);
    let (manifest_path, train_path, bench_path) = (dir.join("split.json"), dir.join(TRAIN_SPLIT), dir.join(BENCH_SPLIT));
    let key = StageKey::new("split", &[&store_log], &args.bench_per_class, Some(ctx.seed))?;
    ctx.stage(key, &[&manifest_path, &train_path, &bench_path], || {
        let store = open_store(ctx)?;
        let corpus = store.labeled_corpus();
        let pairs: Vec<(String, toxi_core::ToxicityClass)> = corpus.iter().map(|i| (i.id.clone(), i.label.value())).collect();
        let m = split_dataset(&pairs, args.bench_per_class, ctx.seed)?;
        let in_bench: std::collections::HashSet<&str> = m.bench.iter().map(String::as_str).collect();
        let (bench, train): (Vec<_>, Vec<_>) = corpus.iter().partition(|i| in_bench.contains(i.id.as_str()));
        let train: Vec<SftRecord> = train
            .into_iter()
            .map(|i| SftRecord { id: i.id.clone(), text: i.text.clone(), label: i.label.value(), annotation: i.annotation.clone() })
            .collect();
        let bench: Vec<BenchItem> =
            bench.into_iter().map(|i| BenchItem { id: i.id.clone(), text: i.text.clone(), label: i.label.value() }).collect();
        jsonl::write(&train_path, &train)?;
        jsonl::write(&bench_path, &bench)?;
        write_json(&manifest_path, &m)?;
        println!(
            "split: {} labeled, bench {} ({} per class), train {} ({} toxic)",
            corpus.len(),
            bench.len(),
            m.bench_per_class,
            train.len(),
            format_percent(m.train_toxic_fraction)
        );
        Ok(())
    })?;
    Ok(())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}
