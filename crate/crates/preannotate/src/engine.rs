use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};
use toxi_core::corpus::{CommentRecord, RecordState};
use toxi_core::cot::{
    auto_label, build_cot_chain, parse_step_completion, AutoLabel, ChainExchange, CotAnnotation,
    CotParseError,
};
use toxi_core::jsonl::{self, Appender, JsonlError};
use toxi_core::Label;

use crate::client::{with_retry, ChatClient, ChatRequest, ClientError, RetryPolicy};

#[derive(Debug, Error)]
pub enum PreannotateError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("step {step}: {source}")]
    Parse { step: usize, source: CotParseError },
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationStatus {
    Annotated,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    AutoLabeled,
    NeedsHuman,
}

/// A comment line extended with its pre-annotation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreannotatedRecord {
    #[serde(flatten)]
    pub comment: CommentRecord,
    pub status: AnnotationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<CotAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Route>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PreannotatedRecord {
    fn annotated(mut comment: CommentRecord, cot: CotAnnotation) -> Self {
        let (route, label) = match auto_label(&cot) {
            AutoLabel::AutoLabeled(l) => (Route::AutoLabeled, Some(l)),
            AutoLabel::NeedsHuman => (Route::NeedsHuman, None),
        };
        comment.state = match route {
            Route::AutoLabeled => RecordState::Labeled,
            Route::NeedsHuman => RecordState::Queued,
        };
        PreannotatedRecord {
            comment,
            status: AnnotationStatus::Annotated,
            cot: Some(cot),
            route: Some(route),
            label,
            error: None,
        }
    }

    fn failed(comment: CommentRecord, error: &PreannotateError) -> Self {
        PreannotatedRecord {
            comment,
            status: AnnotationStatus::Failed,
            cot: None,
            route: None,
            label: None,
            error: Some(error.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    /// Keep existing output and skip ids already annotated.
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { max_concurrency: 4, retry: RetryPolicy::default(), resume: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingSummary {
    pub total: usize,
    pub annotated: usize,
    pub failed: usize,
    pub auto_labeled: usize,
    pub needs_human: usize,
    /// Shares of successfully annotated comments; 0 when none were.
    pub auto_fraction: f64,
    pub queue_fraction: f64,
}

impl RoutingSummary {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a PreannotatedRecord>) -> Self {
        let mut s = RoutingSummary::default();
        for r in records {
            s.total += 1;
            match (r.status, r.route) {
                (AnnotationStatus::Failed, _) => s.failed += 1,
                (_, Some(Route::AutoLabeled)) => s.auto_labeled += 1,
                _ => s.needs_human += 1,
            }
        }
        s.annotated = s.auto_labeled + s.needs_human;
        if s.annotated > 0 {
            s.auto_fraction = s.auto_labeled as f64 / s.annotated as f64;
            s.queue_fraction = s.needs_human as f64 / s.annotated as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub summary: RoutingSummary,
    /// Comments skipped because a previous run already annotated them.
    pub skipped: usize,
    /// Comments sent to the client in this run.
    pub processed: usize,
}

/// Runs the six chain steps for one comment, one client call per step.
pub fn annotate_comment(
    client: &dyn ChatClient,
    retry: &RetryPolicy,
    comment: &CommentRecord,
) -> Result<CotAnnotation, PreannotateError> {
    let chain = build_cot_chain(&comment.text);
    let mut completions: Vec<String> = Vec::with_capacity(6);
    let mut exchanges = Vec::with_capacity(6);
    for (k, step) in chain.steps().iter().enumerate() {
        let prompt = chain.prompt(k, &completions);
        let request = ChatRequest::new(format!("{}:{}", comment.id, k + 1), prompt.clone());
        let completion = with_retry(client, &request, retry)?;
        exchanges.push(ChainExchange { step: *step, prompt, completion: completion.clone() });
        completions.push(completion);
    }
    let mut annotation = parse_step_completion(&completions)
        .map_err(|source| PreannotateError::Parse { step: 6, source })?;
    annotation.raw_steps = exchanges;
    Ok(annotation)
}

/// Reads a pre-annotation file. Later lines for the same id replace earlier
/// ones; first-seen order is kept.
pub fn load_preannotated(path: &Path) -> Result<Vec<PreannotatedRecord>, JsonlError> {
    let lines: Vec<PreannotatedRecord> = jsonl::read_or_empty(path)?;
    let mut order = Vec::new();
    let mut latest: HashMap<String, PreannotatedRecord> = HashMap::new();
    for r in lines {
        if !latest.contains_key(&r.comment.id) {
            order.push(r.comment.id.clone());
        }
        latest.insert(r.comment.id.clone(), r);
    }
    Ok(order.into_iter().filter_map(|id| latest.remove(&id)).collect())
}

/// Pre-annotates `batch` into `out`.
///
/// Results are appended as they arrive so an interrupted run can resume;
/// once the batch is done the file is rewritten in batch order with one line
/// per comment. Client failures are recorded per comment and never abort
/// the run.
pub fn run_preannotation(
    batch: &[CommentRecord],
    client: &dyn ChatClient,
    out: &Path,
    config: &RunConfig,
) -> Result<RunOutcome, PreannotateError> {
    let existing = if config.resume { load_preannotated(out)? } else { Vec::new() };
    let done: HashSet<&str> = existing
        .iter()
        .filter(|r| r.status == AnnotationStatus::Annotated)
        .map(|r| r.comment.id.as_str())
        .collect();
    let todo: Vec<&CommentRecord> = batch.iter().filter(|c| !done.contains(c.id.as_str())).collect();
    let skipped = batch.len() - todo.len();
    info!(total = batch.len(), skipped, todo = todo.len(), "pre-annotation run");

    if !config.resume {
        jsonl::write(out, std::iter::empty::<&PreannotatedRecord>())?;
    }
    let mut fresh: HashMap<String, PreannotatedRecord> = HashMap::new();
    if !todo.is_empty() {
        let mut appender = Appender::open(out)?;
        let next = AtomicUsize::new(0);
        let workers = config.max_concurrency.clamp(1, todo.len());
        let (tx, rx) = mpsc::channel::<PreannotatedRecord>();
        std::thread::scope(|scope| -> Result<(), PreannotateError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (todo, next) = (&todo, &next);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(comment) = todo.get(i) else { break };
                    let record = match annotate_comment(client, &config.retry, comment) {
                        Ok(cot) => PreannotatedRecord::annotated((*comment).clone(), cot),
                        Err(e) => {
                            warn!(id = %comment.id, "pre-annotation failed: {e}");
                            PreannotatedRecord::failed((*comment).clone(), &e)
                        }
                    };
                    if tx.send(record).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for record in rx {
                appender.append(&record)?;
                fresh.insert(record.comment.id.clone(), record);
            }
            Ok(())
        })?;
    }

    let mut previous: HashMap<String, PreannotatedRecord> =
        existing.into_iter().map(|r| (r.comment.id.clone(), r)).collect();
    let mut seen = HashSet::new();
    let mut merged: Vec<PreannotatedRecord> = batch
        .iter()
        .filter(|c| seen.insert(c.id.as_str()))
        .filter_map(|c| fresh.remove(&c.id).or_else(|| previous.remove(&c.id)))
        .collect();
    // Records of comments outside this batch are kept after it.
    let mut others: Vec<PreannotatedRecord> = previous.into_values().collect();
    others.sort_by(|a, b| a.comment.id.cmp(&b.comment.id));
    let summary = RoutingSummary::from_records(&merged);
    merged.extend(others);
    write_atomic(out, &merged)?;

    Ok(RunOutcome { summary, skipped, processed: todo.len() })
}

fn write_atomic(path: &Path, records: &[PreannotatedRecord]) -> Result<(), JsonlError> {
    let tmp = path.with_extension("jsonl.tmp");
    jsonl::write(&tmp, records)?;
    std::fs::rename(&tmp, path).map_err(|source| JsonlError::Io { path: path.to_path_buf(), source })
}
