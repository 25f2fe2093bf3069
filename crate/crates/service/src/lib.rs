//! Human verification of the comments the auto-label rule could not settle.
//!
//! [`AnnotationStore`] keeps every mutation in an append-only event log and
//! rebuilds its in-memory index by replay. [`router`] exposes it over HTTP
//! and [`split_dataset`] carves the balanced benchmark out of the final
//! labels.

mod api;
mod clock;
mod split;
mod store;

pub use api::{router, serve, ApiError, SharedStore};
pub use clock::{Clock, ManualClock, SystemClock};
pub use split::{split_dataset, SplitError, SplitManifest};
pub use store::{
    resolve_decisions, AgreementReport, AnnotationStore, DecisionRecord, Event, LabeledItem,
    Progress, QueueItem, ResolutionPolicy, ServiceError, StoreConfig, TieBreak, EVENT_LOG,
};
