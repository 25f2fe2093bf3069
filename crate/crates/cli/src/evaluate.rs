//! The `eval`, `xlingual` and `report` subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::Args;
use toxi_core::jsonl;
use toxi_core::ToxicityClass;
use toxi_eval::{
    misclassification_report, render_results, run_benchmark, translate_subset, BenchItem, ChatAdapter,
    CheckpointAdapter, ConstantAdapter, Direction, EvalResult, Exemplar, InvalidPolicy, ModelAdapter,
    ModerationAdapter, OpenAiModeration, OracleAdapter, PromptConfig, PromptMode, RunSpec,
};
use toxi_preannotate::{build_client, ClientConfig, LexiconClient, RetryPolicy, ENV_API_KEY};
use toxi_train::{OptimizerRegistry, SftRecord};

use crate::pipeline::write_json;
use crate::{Context, StageKey, BENCH_SPLIT, EVAL_DIR, SPLIT_DIR, TRAIN_SPLIT};

pub const MODERATION_URL_ENV: &str = "TOXI_MODERATION_BASE_URL";
pub const MODERATION_MODEL_ENV: &str = "TOXI_MODERATION_MODEL";

/// Adapter names understood by `--adapter`.
pub const ADAPTER_HELP: &str = "oracle | constant-toxic | constant-non-toxic | lexicon | chat | moderation | checkpoint:DIR";

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, help = ADAPTER_HELP)]
    pub adapter: String,
    /// Defaults to `<data>/split/bench.jsonl`.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// ICL exemplar pool; defaults to the train split.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, default_value = "zero_detailed")]
    pub mode: PromptMode,
    /// Exemplars for few_shot (even).
    #[arg(long)]
    pub k: Option<usize>,
    /// Defaults to `<data>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_policy)]
    pub invalid_policy: Option<InvalidPolicy>,
    /// Toxic threshold of moderation scores.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_concurrency: Option<usize>,
}

fn parse_policy(s: &str) -> Result<InvalidPolicy, String> {
    match s {
        "non_toxic" => Ok(InvalidPolicy::AsNonToxic),
        "toxic" => Ok(InvalidPolicy::AsToxic),
        other => Err(format!("unknown policy {other:?} (expected non_toxic or toxic)")),
    }
}

struct EvalPlan {
    spec: RunSpec,
    adapter_name: String,
    threshold: f64,
    retry: RetryPolicy,
    misclassified: usize,
}

fn build_adapter(name: &str, bench: &[BenchItem], plan: &EvalPlan) -> Result<Box<dyn ModelAdapter>> {
    Ok(match name {
        "oracle" => Box::new(OracleAdapter::from_items(bench.iter().map(|b| (b.id.as_str(), b.label)))),
        "constant-toxic" => Box::new(ConstantAdapter(ToxicityClass::Toxic)),
        "constant-non-toxic" => Box::new(ConstantAdapter(ToxicityClass::NonToxic)),
        "lexicon" => Box::new(ChatAdapter::new(LexiconClient::default(), plan.retry)),
        "chat" => Box::new(ChatAdapter::new(build_client(&ClientConfig::from_env()?)?, plan.retry)),
        "moderation" => {
            let url = std::env::var(MODERATION_URL_ENV)
                .or_else(|_| std::env::var(toxi_preannotate::ENV_BASE_URL))
                .with_context(|| format!("{MODERATION_URL_ENV} is not set"))?;
            let model = std::env::var(MODERATION_MODEL_ENV).unwrap_or_else(|_| "omni-moderation-latest".into());
            let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
            Box::new(ModerationAdapter::with_threshold(OpenAiModeration::new(&url, key, &model)?, plan.threshold))
        }
        other => match other.strip_prefix("checkpoint:") {
            Some(dir) => Box::new(CheckpointAdapter::open(Path::new(dir), &OptimizerRegistry::default())?),
            None => bail!("unknown adapter {other:?}; expected one of: {ADAPTER_HELP}"),
        },
    })
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn read_pool(path: &Path) -> Result<Vec<Exemplar>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let records: Vec<SftRecord> = jsonl::read(path)?;
    Ok(records.into_iter().map(|r| Exemplar { id: r.id, text: r.text, label: r.label }).collect())
}

/// Runs one evaluation into `out` and returns the result file.
fn evaluate_into(
    ctx: &Context,
    plan: &EvalPlan,
    bench_path: &Path,
    pool_path: &Path,
    out: &Path,
) -> Result<PathBuf> {
    let bench: Vec<BenchItem> = jsonl::read(bench_path).with_context(|| format!("reading bench {}", bench_path.display()))?;
    let adapter = build_adapter(&plan.adapter_name, &bench, plan)?;
    let name = adapter.name();
    let file_stem = if adapter.uses_prompt() {
        format!("{}__{}", slug(&name), plan.spec.prompt.hash())
    } else {
        slug(&name)
    };
    let result_path = out.join(format!("{file_stem}.json"));
    let listing_path = out.join(format!("{file_stem}.misclassified.txt"));
    let mut inputs: Vec<&Path> = vec![bench_path];
    if adapter.uses_prompt() && pool_path.exists() {
        inputs.push(pool_path);
    }
    let key = StageKey::new(format!("eval:{file_stem}:{}", out.display()), &inputs, &(&name, &plan.spec), Some(ctx.seed))?;
    ctx.stage(key, &[&result_path, &listing_path], || {
        let pool = if adapter.uses_prompt() { read_pool(pool_path)? } else { Vec::new() };
        let cache = out.join("cache.jsonl");
        let (result, stats) = run_benchmark(adapter.as_ref(), &bench, &pool, &plan.spec, Some(&cache))?;
        result.write(&result_path)?;
        let listing = misclassification_report(&result, &bench, plan.misclassified);
        std::fs::write(&listing_path, listing.render())?;
        println!("eval {name}: {} invoked, {} cached, {} failed", stats.invoked, stats.cached, stats.failed);
        print!("{}", render_results(std::slice::from_ref(&result)));
        Ok(())
    })?;
    Ok(result_path)
}

fn plan(ctx: &Context, adapter: String, mode: PromptMode, k: Option<usize>, policy: Option<InvalidPolicy>) -> EvalPlan {
    let section = &ctx.config.eval;
    let prompt = PromptConfig { mode, k: k.unwrap_or(section.k), seed: ctx.seed };
    let mut spec = RunSpec::new(prompt);
    spec.invalid_policy = policy.unwrap_or(section.invalid_policy);
    spec.max_concurrency = section.max_concurrency;
    EvalPlan {
        spec,
        adapter_name: adapter,
        threshold: section.moderation_threshold,
        retry: section.retry,
        misclassified: section.misclassified,
    }
}

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<()> {
    let mut plan = plan(ctx, args.adapter, args.mode, args.k, args.invalid_policy);
    if let Some(t) = args.threshold {
        plan.threshold = t;
    }
    if let Some(c) = args.max_concurrency {
        plan.spec.max_concurrency = c;
    }
    let bench = args.bench.unwrap_or_else(|| ctx.path(SPLIT_DIR).join(BENCH_SPLIT));
    let pool = args.pool.unwrap_or_else(|| ctx.path(SPLIT_DIR).join(TRAIN_SPLIT));
    let out = args.out.unwrap_or_else(|| ctx.path(EVAL_DIR));
    evaluate_into(ctx, &plan, &bench, &pool, &out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct XlingualArgs {
    /// Labeled subset to translate, one `{id, text, label}` per line.
    #[arg(long)]
    pub subset: PathBuf,
    #[arg(long, default_value = "en2fr")]
    pub direction: Direction,
    /// Defaults to `<data>/xlingual/<direction>.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate this adapter on the translated subset.
    #[arg(long, help = ADAPTER_HELP)]
    pub adapter: Option<String>,
    #[arg(long, default_value = "zero_detailed")]
    pub mode: PromptMode,
    #[arg(long)]
    pub k: Option<usize>,
    /// Exemplar pool for ICL modes; defaults to the train split.
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

pub fn xlingual(ctx: &Context, args: XlingualArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| ctx.path("xlingual").join(format!("{}.jsonl", args.direction.as_str())));
    let bench_path = out.with_extension("bench.jsonl");
    let client_config = ClientConfig::from_env()?;
    let key = StageKey::new(
        format!("xlingual:{}", out.display()),
        &[&args.subset],
        &(&client_config.base_url, &client_config.model, args.direction),
        None,
    )?;
    let retry = ctx.config.eval.retry;
    ctx.stage(key, &[&out, &bench_path], || {
        let items: Vec<BenchItem> = jsonl::read(&args.subset)?;
        let client = build_client(&client_config)?;
        let outcome = translate_subset(&items, client.as_ref(), args.direction, &retry);
        jsonl::write(&out, &outcome.items)?;
        let bench: Vec<BenchItem> = outcome.items.iter().map(|t| t.bench_item()).collect();
        jsonl::write(&bench_path, &bench)?;
        let passthrough = outcome.items.iter().filter(|t| t.passthrough).count();
        println!(
            "xlingual {}: {} translated, {} already in the target language, {} excluded",
            args.direction.as_str(),
            outcome.items.len() - passthrough,
            passthrough,
            outcome.excluded.len()
        );
        Ok(())
    })?;
    if let Some(adapter) = args.adapter {
        let plan = plan(ctx, adapter, args.mode, args.k, None);
        let pool = args.pool.unwrap_or_else(|| ctx.path(SPLIT_DIR).join(TRAIN_SPLIT));
        let eval_dir = out.with_extension("eval");
        evaluate_into(ctx, &plan, &bench_path, &pool, &eval_dir)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of result files; defaults to `<data>/eval`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Benchmark used for the misclassification texts.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// Defaults to `<results>/report.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Misclassified examples listed per error type.
    #[arg(long)]
    pub misclassified: Option<usize>,
}

/// Reads every result file in `dir`, in file-name order.
pub fn load_results(dir: &Path) -> Result<Vec<EvalResult>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut results = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        match serde_json::from_str::<EvalResult>(&text) {
            Ok(r) => results.push(r),
            Err(e) => tracing::debug!(path = %p.display(), "not a result file: {e}"),
        }
    }
    Ok(results)
}

pub fn report(ctx: &Context, args: ReportArgs) -> Result<()> {
    let dir = args.results.unwrap_or_else(|| ctx.path(EVAL_DIR));
    let out = args.out.unwrap_or_else(|| dir.join("report.txt"));
    let bench_path = args.bench.unwrap_or_else(|| ctx.path(SPLIT_DIR).join(BENCH_SPLIT));
    let k = args.misclassified.unwrap_or(ctx.config.eval.misclassified);
    let results = load_results(&dir)?;
    if results.is_empty() {
        bail!("no result files in {}", dir.display());
    }
    let bench: Vec<BenchItem> = if bench_path.exists() { jsonl::read(&bench_path)? } else { Vec::new() };
    let mut text = render_results(&results);
    for r in &results {
        text.push_str(&format!("\n== {} ==\n", toxi_eval::row_label(r)));
        text.push_str(&misclassification_report(r, &bench, k).render());
    }
    std::fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
    let summary: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "configuration": toxi_eval::row_label(r),
                "adapter": r.adapter,
                "prompt_hash": r.prompt_hash,
                "report": r.report,
                "accuracy_interval": r.accuracy_interval,
                "invalid_rate": r.invalid_rate,
            })
        })
        .collect();
    write_json(&out.with_extension("json"), &summary)?;
    print!("{text}");
    Ok(())
}
