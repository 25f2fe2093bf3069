//! Core building blocks of the toxi toxicity-annotation pipeline.
//!
//! - [`taxonomy`]: labels, the six-dimension severity vector, implicit-toxicity
//!   categories and the three-letter experiment codes.
//! - [`corpus`]: anonymization, length filtering, deduplication and temporal
//!   statistics for raw forum dumps.
//! - [`cot`]: the structured chain-of-thought annotation, its canonical text
//!   rendering, the parser and the high-confidence auto-label rule.
//! - [`stats`]: binomial confidence intervals, agreement tables and
//!   classification reports.
//! - [`jsonl`]: line-delimited record IO shared by every stage.

pub mod corpus;
pub mod cot;
pub mod jsonl;
pub mod stats;
pub mod taxonomy;
pub mod text;

pub use taxonomy::{
    ExperimentConfig, FourWayDecision, ImplicitCategory, Label, Provenance, ToxicityClass,
    ToxicityVector,
};
