//! Benchmark runs with a resumable per-item cache.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};
use toxi_core::cot::{parse_decision, Decision};
use toxi_core::jsonl::{self, Appender, JsonlError};
use toxi_core::stats::{classification_report, wilson_interval, BinomialSample, ClassReport, Interval, StatsError};
use toxi_core::ToxicityClass;

use crate::adapter::{AdapterKind, AdapterOutput, EvalInput, ModelAdapter};
use crate::prompt::{build_icl_prompt, Exemplar, PromptConfig, PromptError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("duplicate benchmark id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchItem {
    pub id: String,
    pub text: String,
    pub label: ToxicityClass,
}

/// How unparseable outputs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    AsNonToxic,
    AsToxic,
}

impl InvalidPolicy {
    fn class(self) -> ToxicityClass {
        match self {
            InvalidPolicy::AsNonToxic => ToxicityClass::NonToxic,
            InvalidPolicy::AsToxic => ToxicityClass::Toxic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub prompt: PromptConfig,
    pub invalid_policy: InvalidPolicy,
    pub max_concurrency: usize,
}

impl RunSpec {
    pub fn new(prompt: PromptConfig) -> Self {
        RunSpec { prompt, invalid_policy: InvalidPolicy::AsNonToxic, max_concurrency: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub gold: ToxicityClass,
    /// Scored prediction (the invalid policy applied).
    pub predicted: ToxicityClass,
    pub raw: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalItem {
    pub fn is_false_positive(&self) -> bool {
        self.predicted.is_toxic() && !self.gold.is_toxic()
    }

    pub fn is_false_negative(&self) -> bool {
        !self.predicted.is_toxic() && self.gold.is_toxic()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub adapter: String,
    pub kind: AdapterKind,
    /// False when the adapter ignores the ICL prompt.
    pub uses_prompt: bool,
    pub prompt: PromptConfig,
    pub prompt_hash: String,
    pub invalid_policy: InvalidPolicy,
    /// In benchmark order.
    pub items: Vec<EvalItem>,
    pub report: ClassReport,
    /// Wilson interval on accuracy at 95%.
    pub accuracy_interval: Interval,
    pub invalid: usize,
    pub invalid_rate: f64,
    pub failed: usize,
}

impl EvalResult {
    /// Pretty JSON, stable across identical runs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), JsonlError> {
        let io = |source| JsonlError::Io { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json() + "\n").map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    output: AdapterOutput,
}

/// Cache key of one (adapter, prompt configuration, item) invocation.
pub fn cache_key(adapter: &dyn ModelAdapter, prompt: &PromptConfig, id: &str) -> String {
    let prompt_part = if adapter.uses_prompt() { prompt.hash() } else { "-".to_string() };
    format!("{}|{}|{}", adapter.name(), prompt_part, id)
}

/// Runs `adapter` over `bench`, reusing cached outputs from `cache` (a JSONL
/// file) and appending new ones. Adapter failures become invalid items.
pub fn run_benchmark(
    adapter: &dyn ModelAdapter,
    bench: &[BenchItem],
    pool: &[Exemplar],
    spec: &RunSpec,
    cache: Option<&Path>,
) -> Result<(EvalResult, RunStats), EvalError> {
    if bench.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = bench.iter().find(|b| !seen.insert(b.id.as_str())) {
        return Err(EvalError::DuplicateId(dup.id.clone()));
    }
    let mut cached: HashMap<String, AdapterOutput> = match cache {
        Some(path) => jsonl::read_or_empty::<CacheEntry>(path)?.into_iter().map(|e| (e.key, e.output)).collect(),
        None => HashMap::new(),
    };
    let keys: Vec<String> = bench.iter().map(|b| cache_key(adapter, &spec.prompt, &b.id)).collect();
    let prompts: Vec<String> = if adapter.uses_prompt() {
        bench.iter().map(|b| build_icl_prompt(&spec.prompt, &b.text, pool)).collect::<Result<_, _>>()?
    } else {
        vec![String::new(); bench.len()]
    };
    let todo: Vec<usize> = (0..bench.len()).filter(|&i| !cached.contains_key(&keys[i])).collect();
    info!(adapter = %adapter.name(), items = bench.len(), cached = bench.len() - todo.len(), "benchmark run");

    let mut errors: HashMap<usize, String> = HashMap::new();
    if !todo.is_empty() {
        let mut appender = cache.map(Appender::open).transpose()?;
        let next = AtomicUsize::new(0);
        let workers = spec.max_concurrency.clamp(1, todo.len());
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| -> Result<(), EvalError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (todo, next, prompts) = (&todo, &next, &prompts);
                scope.spawn(move || {
                    while let Some(&i) = todo.get(next.fetch_add(1, Ordering::Relaxed)) {
                        let input = EvalInput { id: &bench[i].id, text: &bench[i].text, prompt: &prompts[i] };
                        if tx.send((i, adapter.invoke(&input))).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(tx);
            for (i, outcome) in rx {
                match outcome {
                    Ok(output) => {
                        if let Some(a) = appender.as_mut() {
                            a.append(&CacheEntry { key: keys[i].clone(), output: output.clone() })?;
                        }
                        cached.insert(keys[i].clone(), output);
                    }
                    Err(e) => {
                        warn!(id = %bench[i].id, "adapter failed: {e}");
                        errors.insert(i, e.to_string());
                    }
                }
            }
            Ok(())
        })?;
    }

    let items: Vec<EvalItem> = bench
        .iter()
        .enumerate()
        .map(|(i, b)| match cached.get(&keys[i]) {
            Some(out) => {
                let decision = parse_decision(&out.raw);
                EvalItem {
                    id: b.id.clone(),
                    gold: b.label,
                    predicted: decision.class().unwrap_or(spec.invalid_policy.class()),
                    raw: out.raw.clone(),
                    valid: decision != Decision::Invalid,
                    confidence: out.confidence,
                    error: None,
                }
            }
            None => EvalItem {
                id: b.id.clone(),
                gold: b.label,
                predicted: spec.invalid_policy.class(),
                raw: String::new(),
                valid: false,
                confidence: None,
                error: errors.get(&i).cloned(),
            },
        })
        .collect();
    let result = assemble(adapter.name(), adapter.kind(), adapter.uses_prompt(), spec, items)?;
    let stats = RunStats { invoked: todo.len(), cached: bench.len() - todo.len(), failed: errors.len() };
    Ok((result, stats))
}

/// Calls made by one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub invoked: usize,
    pub cached: usize,
    pub failed: usize,
}

/// Builds the result and report from scored items.
pub fn assemble(
    adapter: String,
    kind: AdapterKind,
    uses_prompt: bool,
    spec: &RunSpec,
    items: Vec<EvalItem>,
) -> Result<EvalResult, EvalError> {
    let preds: Vec<ToxicityClass> = items.iter().map(|i| i.predicted).collect();
    let golds: Vec<ToxicityClass> = items.iter().map(|i| i.gold).collect();
    let report = classification_report(&preds, &golds)?;
    let correct = report.confusion.tp + report.confusion.tn;
    let accuracy_interval = wilson_interval(&BinomialSample::new(correct, report.n)?);
    let invalid = items.iter().filter(|i| !i.valid).count();
    let failed = items.iter().filter(|i| i.error.is_some()).count();
    Ok(EvalResult {
        adapter,
        kind,
        uses_prompt,
        prompt: spec.prompt.clone(),
        prompt_hash: if uses_prompt { spec.prompt.hash() } else { "-".to_string() },
        invalid_policy: spec.invalid_policy,
        invalid_rate: invalid as f64 / items.len() as f64,
        invalid,
        failed,
        items,
        report,
        accuracy_interval,
    })
}
