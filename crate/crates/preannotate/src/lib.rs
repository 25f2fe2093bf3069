//! Pre-annotation of comments with the six-step CoT chain.
//!
//! A [`ChatClient`] answers one prompt per chain step; [`run_preannotation`]
//! fans comments out over a bounded worker pool, appends one
//! [`PreannotatedRecord`] per comment and routes each through the
//! auto-label rule.

mod client;
mod engine;
mod lexicon;
mod validate;

pub use client::{
    build_client, with_retry, ChatClient, ChatRequest, ClientConfig, ClientError, OpenAiChatClient,
    RetryPolicy, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL, MOCK_SCHEME,
};
pub use engine::{
    annotate_comment, load_preannotated, run_preannotation, AnnotationStatus, PreannotateError,
    PreannotatedRecord, Route, RoutingSummary, RunConfig, RunOutcome,
};
pub use lexicon::{extract_comment, LexiconClient};
pub use validate::{validate_rule, RuleSample, RuleValidation};
