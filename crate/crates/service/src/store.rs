use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};
use toxi_core::corpus::CommentRecord;
use toxi_core::cot::CotAnnotation;
use toxi_core::jsonl::{self, Appender, JsonlError};
use toxi_core::stats::{
    agreement_table, wilson_interval, AgreementTable, BinomialSample, Interval, DEFAULT_ALPHA,
};
use toxi_core::taxonomy::map_four_way_to_binary;
use toxi_core::{FourWayDecision, Label, Provenance, ToxicityClass};
use toxi_preannotate::{AnnotationStatus, PreannotatedRecord};

use crate::clock::Clock;

/// File name of the event log inside a store directory.
pub const EVENT_LOG: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("item not found: {0}")]
    NotFound(String),
    #[error("unknown annotator: {0}")]
    UnknownAnnotator(String),
    #[error("item {item} is leased to {holder}")]
    LeaseConflict { item: String, holder: String },
    #[error("item {0} was auto-labeled and is not in the review queue")]
    NotQueued(String),
    #[error("item {0} has no decision yet")]
    Unresolved(String),
    #[error("invalid annotator id {0:?}")]
    InvalidAnnotator(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    Toxic,
    NonToxic,
}

impl TieBreak {
    fn class(self) -> ToxicityClass {
        match self {
            TieBreak::Toxic => ToxicityClass::Toxic,
            TieBreak::NonToxic => ToxicityClass::NonToxic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolutionPolicy {
    /// Decisions needed before an item leaves the queue.
    pub required_decisions: usize,
    pub tie: TieBreak,
}

impl Default for ResolutionPolicy {
    fn default() -> Self {
        ResolutionPolicy { required_decisions: 1, tie: TieBreak::Toxic }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub lease_minutes: i64,
    pub policy: ResolutionPolicy,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { lease_minutes: 15, policy: ResolutionPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub annotator: String,
    pub decision: FourWayDecision,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub comment: CommentRecord,
    #[serde(default)]
    pub annotation: Option<CotAnnotation>,
    pub priority: f64,
    /// Set for comments settled by the auto-label rule; those never enter
    /// the review queue.
    #[serde(default)]
    pub auto_label: Option<Label>,
    #[serde(default)]
    pub assigned_to: Option<String>,
    #[serde(default)]
    pub lease_expires: Option<DateTime<Utc>>,
    #[serde(default)]
    pub decisions: Vec<DecisionRecord>,
}

impl QueueItem {
    pub fn id(&self) -> &str {
        &self.comment.id
    }

    pub fn needs_human(&self) -> bool {
        self.auto_label.is_none()
    }

    pub fn is_resolved(&self, policy: &ResolutionPolicy) -> bool {
        self.auto_label.is_some() || self.decisions.len() >= policy.required_decisions.max(1)
    }

    pub fn decided_by(&self, annotator: &str) -> Option<&DecisionRecord> {
        self.decisions.iter().find(|d| d.annotator == annotator)
    }

    /// Holder of a lease still running at `now`.
    pub fn active_lease(&self, now: DateTime<Utc>) -> Option<&str> {
        match (&self.assigned_to, self.lease_expires) {
            (Some(holder), Some(exp)) if exp > now => Some(holder),
            _ => None,
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ItemAdded {
        at: DateTime<Utc>,
        item: Box<QueueItem>,
    },
    AnnotatorRegistered {
        at: DateTime<Utc>,
        annotator: String,
    },
    Leased {
        at: DateTime<Utc>,
        item_id: String,
        annotator: String,
        expires_at: DateTime<Utc>,
    },
    Decided {
        at: DateTime<Utc>,
        item_id: String,
        annotator: String,
        decision: FourWayDecision,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
struct State {
    items: BTreeMap<String, QueueItem>,
    annotators: BTreeSet<String>,
}

impl State {
    fn apply(&mut self, event: &Event) {
        match event {
            Event::ItemAdded { item, .. } => {
                self.items.entry(item.comment.id.clone()).or_insert_with(|| (**item).clone());
            }
            Event::AnnotatorRegistered { annotator, .. } => {
                self.annotators.insert(annotator.clone());
            }
            Event::Leased { item_id, annotator, expires_at, .. } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    item.assigned_to = Some(annotator.clone());
                    item.lease_expires = Some(*expires_at);
                }
            }
            Event::Decided { at, item_id, annotator, decision } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    let record = DecisionRecord { annotator: annotator.clone(), decision: *decision, at: *at };
                    match item.decisions.iter_mut().find(|d| d.annotator == *annotator) {
                        Some(existing) => *existing = record,
                        None => item.decisions.push(record),
                    }
                    if item.assigned_to.as_deref() == Some(annotator.as_str()) {
                        item.assigned_to = None;
                        item.lease_expires = None;
                    }
                }
            }
        }
    }
}

/// Final label from human decisions: a single decision maps through the
/// grouped scale; several decisions take the grouped majority, ties going to
/// `tie`.
pub fn resolve_decisions(decisions: &[FourWayDecision], tie: TieBreak) -> Option<Label> {
    match decisions {
        [] => None,
        [only] => Some(map_four_way_to_binary(*only)),
        many => {
            let yes = many.iter().filter(|d| d.is_grouped_yes()).count();
            let no = many.len() - yes;
            let value = match yes.cmp(&no) {
                std::cmp::Ordering::Greater => ToxicityClass::Toxic,
                std::cmp::Ordering::Less => ToxicityClass::NonToxic,
                std::cmp::Ordering::Equal => tie.class(),
            };
            Some(Label::human(value))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<CotAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub auto_labeled: usize,
    pub needs_human: usize,
    pub resolved: usize,
    pub remaining: usize,
    pub leased: usize,
    /// Resolved share of the review queue; 0 when nothing was labeled.
    pub completion: f64,
    pub decisions_by_annotator: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub a: String,
    pub b: String,
    /// Items labeled by both annotators.
    pub n: usize,
    pub exact_agreement: Option<f64>,
    pub grouped_agreement: Option<f64>,
    pub grouped_interval: Option<Interval>,
    /// `b`'s four-way decisions against `a`'s grouped label.
    pub table: Option<AgreementTable>,
}

pub struct AnnotationStore {
    state: State,
    log: Option<Appender>,
    clock: Arc<dyn Clock>,
    config: StoreConfig,
}

impl AnnotationStore {
    /// Store without persistence.
    pub fn in_memory(clock: Arc<dyn Clock>, config: StoreConfig) -> Self {
        AnnotationStore { state: State::default(), log: None, clock, config }
    }

    /// Opens (or creates) the store in `dir`, replaying its event log.
    pub fn open(dir: &Path, clock: Arc<dyn Clock>, config: StoreConfig) -> Result<Self, ServiceError> {
        let path = dir.join(EVENT_LOG);
        let events: Vec<Event> = jsonl::read_or_empty(&path)?;
        let mut state = State::default();
        for e in &events {
            state.apply(e);
        }
        info!(events = events.len(), items = state.items.len(), "replayed event log");
        let log = Appender::open(&path)?;
        Ok(AnnotationStore { state, log: Some(log), clock, config })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    fn record(&mut self, event: Event) -> Result<(), ServiceError> {
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        debug!(?event, "event");
        self.state.apply(&event);
        Ok(())
    }

    pub fn register_annotator(&mut self, annotator: &str) -> Result<(), ServiceError> {
        let valid = !annotator.is_empty()
            && annotator.len() <= 64
            && annotator.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !valid {
            return Err(ServiceError::InvalidAnnotator(annotator.to_string()));
        }
        if self.state.annotators.contains(annotator) {
            return Ok(());
        }
        let at = self.clock.now();
        self.record(Event::AnnotatorRegistered { at, annotator: annotator.to_string() })
    }

    pub fn annotators(&self) -> impl Iterator<Item = &str> {
        self.state.annotators.iter().map(String::as_str)
    }

    fn require_annotator(&self, annotator: &str) -> Result<(), ServiceError> {
        if self.state.annotators.contains(annotator) {
            Ok(())
        } else {
            Err(ServiceError::UnknownAnnotator(annotator.to_string()))
        }
    }

    /// Adds one comment. Returns false when the id is already present.
    pub fn add_item(
        &mut self,
        comment: CommentRecord,
        annotation: Option<CotAnnotation>,
        auto_label: Option<Label>,
    ) -> Result<bool, ServiceError> {
        if self.state.items.contains_key(&comment.id) {
            return Ok(false);
        }
        let priority = comment
            .weak_signal
            .or_else(|| annotation.as_ref().map(|a| f64::from(a.score) / 10.0))
            .unwrap_or(0.5);
        let item = QueueItem {
            comment,
            annotation,
            priority,
            auto_label,
            assigned_to: None,
            lease_expires: None,
            decisions: Vec::new(),
        };
        let at = self.clock.now();
        self.record(Event::ItemAdded { at, item: Box::new(item) })?;
        Ok(true)
    }

    /// Imports pre-annotated comments; failed pre-annotations are skipped.
    /// Returns the number of new items.
    pub fn import(&mut self, records: &[PreannotatedRecord]) -> Result<usize, ServiceError> {
        let mut added = 0;
        for r in records.iter().filter(|r| r.status == AnnotationStatus::Annotated) {
            let auto = r.label.filter(|l| l.provenance() == Provenance::AutoRule);
            if self.add_item(r.comment.clone(), r.cot.clone(), auto)? {
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn item(&self, id: &str) -> Option<&QueueItem> {
        self.state.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &QueueItem> {
        self.state.items.values()
    }

    /// Leases the highest-priority open item to `annotator`. An annotator
    /// asking again before deciding gets the same item back.
    pub fn next_item(&mut self, annotator: &str) -> Result<Option<QueueItem>, ServiceError> {
        self.require_annotator(annotator)?;
        let now = self.clock.now();
        let policy = self.config.policy;
        let open = |item: &&QueueItem| {
            item.needs_human() && !item.is_resolved(&policy) && item.decided_by(annotator).is_none()
        };
        let held = self
            .state
            .items
            .values()
            .filter(open)
            .find(|i| i.active_lease(now) == Some(annotator))
            .map(|i| i.comment.id.clone());
        let chosen = held.or_else(|| {
            self.state
                .items
                .values()
                .filter(open)
                .filter(|i| i.active_lease(now).is_none())
                .max_by(|a, b| a.priority.total_cmp(&b.priority).then_with(|| b.comment.id.cmp(&a.comment.id)))
                .map(|i| i.comment.id.clone())
        });
        let Some(id) = chosen else { return Ok(None) };
        let expires_at = now + Duration::minutes(self.config.lease_minutes);
        self.record(Event::Leased { at: now, item_id: id.clone(), annotator: annotator.to_string(), expires_at })?;
        Ok(self.state.items.get(&id).cloned())
    }

    /// Stores `decision`; a repeated identical submission is a no-op and a
    /// different one replaces the annotator's earlier decision.
    pub fn submit_label(
        &mut self,
        item_id: &str,
        annotator: &str,
        decision: FourWayDecision,
    ) -> Result<DecisionRecord, ServiceError> {
        self.require_annotator(annotator)?;
        let now = self.clock.now();
        let item = self
            .state
            .items
            .get(item_id)
            .ok_or_else(|| ServiceError::NotFound(item_id.to_string()))?;
        if !item.needs_human() {
            return Err(ServiceError::NotQueued(item_id.to_string()));
        }
        if let Some(holder) = item.active_lease(now).filter(|h| *h != annotator) {
            return Err(ServiceError::LeaseConflict { item: item_id.to_string(), holder: holder.to_string() });
        }
        if let Some(existing) = item.decided_by(annotator).filter(|d| d.decision == decision) {
            return Ok(existing.clone());
        }
        self.record(Event::Decided {
            at: now,
            item_id: item_id.to_string(),
            annotator: annotator.to_string(),
            decision,
        })?;
        Ok(self.state.items[item_id].decided_by(annotator).cloned().expect("just recorded"))
    }

    pub fn resolve_final_label(&self, item_id: &str) -> Result<Label, ServiceError> {
        let item = self.item(item_id).ok_or_else(|| ServiceError::NotFound(item_id.to_string()))?;
        if let Some(auto) = item.auto_label {
            return Ok(auto);
        }
        let decisions: Vec<FourWayDecision> = item.decisions.iter().map(|d| d.decision).collect();
        resolve_decisions(&decisions, self.config.policy.tie)
            .ok_or_else(|| ServiceError::Unresolved(item_id.to_string()))
    }

    /// Items with a final label, sorted by id.
    pub fn labeled_corpus(&self) -> Vec<LabeledItem> {
        let policy = self.config.policy;
        self.items()
            .filter(|i| i.is_resolved(&policy))
            .filter_map(|i| {
                let label = self.resolve_final_label(i.id()).ok()?;
                Some(LabeledItem {
                    id: i.comment.id.clone(),
                    text: i.comment.text.clone(),
                    label,
                    annotation: i.annotation.clone(),
                })
            })
            .collect()
    }

    pub fn progress(&self) -> Progress {
        let now = self.clock.now();
        let policy = self.config.policy;
        let mut p = Progress {
            total: 0,
            auto_labeled: 0,
            needs_human: 0,
            resolved: 0,
            remaining: 0,
            leased: 0,
            completion: 0.0,
            decisions_by_annotator: self.state.annotators.iter().map(|a| (a.clone(), 0)).collect(),
        };
        for item in self.items() {
            p.total += 1;
            if !item.needs_human() {
                p.auto_labeled += 1;
                continue;
            }
            p.needs_human += 1;
            if item.is_resolved(&policy) {
                p.resolved += 1;
            } else {
                p.remaining += 1;
                if item.active_lease(now).is_some() {
                    p.leased += 1;
                }
            }
            for d in &item.decisions {
                *p.decisions_by_annotator.entry(d.annotator.clone()).or_default() += 1;
            }
        }
        if p.needs_human > 0 {
            p.completion = p.resolved as f64 / p.needs_human as f64;
        }
        p
    }

    pub fn agreement(&self, a: &str, b: &str) -> Result<AgreementReport, ServiceError> {
        self.require_annotator(a)?;
        self.require_annotator(b)?;
        let pairs: Vec<(FourWayDecision, FourWayDecision)> = self
            .items()
            .filter_map(|i| Some((i.decided_by(a)?.decision, i.decided_by(b)?.decision)))
            .collect();
        let n = pairs.len();
        let mut report = AgreementReport {
            a: a.to_string(),
            b: b.to_string(),
            n,
            exact_agreement: None,
            grouped_agreement: None,
            grouped_interval: None,
            table: None,
        };
        if n == 0 {
            return Ok(report);
        }
        let exact = pairs.iter().filter(|(x, y)| x == y).count();
        let grouped = pairs.iter().filter(|(x, y)| x.grouped() == y.grouped()).count();
        let sample = BinomialSample::new(grouped as u64, n as u64).expect("grouped <= n, n > 0");
        report.exact_agreement = Some(exact as f64 / n as f64);
        report.grouped_agreement = Some(sample.proportion());
        report.grouped_interval = Some(wilson_interval(&sample));
        let table_pairs: Vec<(FourWayDecision, ToxicityClass)> =
            pairs.iter().map(|(x, y)| (*y, x.grouped())).collect();
        report.table = agreement_table(&table_pairs, DEFAULT_ALPHA).ok();
        Ok(report)
    }

    /// Owned copy of the indexed state, for comparisons.
    pub fn snapshot(&self) -> (Vec<QueueItem>, Vec<String>) {
        (
            self.state.items.values().cloned().collect(),
            self.state.annotators.iter().cloned().collect(),
        )
    }
}
