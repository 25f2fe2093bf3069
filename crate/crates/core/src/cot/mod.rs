//! Structured chain-of-thought annotations.

mod parse;
pub mod prompts;

pub use parse::{
    parse_cot_output, parse_decision, parse_step_completion, parse_tones, parse_vector,
    scan_decision, CotParseError, Decision,
};
pub use prompts::{build_cot_chain, ChainStep, CotChain, PROMPT_VERSION, TOXICITY_DEFINITION};

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{ImplicitCategory, Label, ToxicityClass, ToxicityVector};
use crate::text::single_line;
use prompts::*;

pub const MAX_SCORE: u8 = 10;
/// Scores at or below this value are auto-labeled non-toxic.
pub const AUTO_LABEL_MAX_SCORE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tone {
    pub name: String,
    /// Confidence in percent, 0..=100.
    pub confidence: u8,
}

/// One prompt/completion exchange of the annotation chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainExchange {
    pub step: ChainStep,
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotAnnotation {
    pub summary: String,
    #[serde(default)]
    pub tones: Vec<Tone>,
    /// Absent when the model output did not contain a readable vector.
    #[serde(default)]
    pub taxonomy: Option<ToxicityVector>,
    #[serde(default)]
    pub implicit: Vec<ImplicitCategory>,
    #[serde(default)]
    pub doubts: String,
    pub score: u8,
    #[serde(default)]
    pub justification: String,
    pub decision: ToxicityClass,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_steps: Vec<ChainExchange>,
}

impl CotAnnotation {
    /// Minimal annotation with only the verdict fields set.
    pub fn verdict(score: u8, decision: ToxicityClass) -> Self {
        CotAnnotation {
            summary: String::new(),
            tones: Vec::new(),
            taxonomy: None,
            implicit: Vec::new(),
            doubts: String::new(),
            score: score.min(MAX_SCORE),
            justification: String::new(),
            decision,
            raw_steps: Vec::new(),
        }
    }

    /// Canonical text rendering: one think block per chain step, then the
    /// conclusion question and a bare `oui`/`non`. Free-text fields are
    /// collapsed to a single line so labels always start a line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut block = |body: String| {
            let _ = write!(out, "{THINK_OPEN}\n{body}\n{THINK_CLOSE}\n");
        };
        block(format!("{LABEL_SUMMARY} : {}", single_line(&self.summary)));
        let tones = if self.tones.is_empty() {
            "aucun".to_string()
        } else {
            self.tones
                .iter()
                .map(|t| format!("{} ({}%)", single_line(&t.name), t.confidence))
                .collect::<Vec<_>>()
                .join(", ")
        };
        block(format!("{LABEL_TONES} : {tones}"));
        if let Some(v) = self.taxonomy {
            block(format!("{LABEL_VECTOR} : {v}"));
        }
        let implicit = if self.implicit.is_empty() {
            "aucune".to_string()
        } else {
            self.implicit
                .iter()
                .map(|c| c.label_fr())
                .collect::<Vec<_>>()
                .join(", ")
        };
        block(format!("{LABEL_IMPLICIT} : {implicit}"));
        block(format!("{LABEL_DOUBTS} : {}", single_line(&self.doubts)));
        block(format!(
            "{LABEL_SCORE} : {}/10\n{LABEL_JUSTIFICATION} : {}",
            self.score,
            single_line(&self.justification)
        ));
        let _ = write!(out, "{CONCLUSION_QUESTION}\n{}", self.decision.answer_fr());
        out
    }
}

/// Outcome of the high-confidence rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "route", content = "label", rename_all = "snake_case")]
pub enum AutoLabel {
    AutoLabeled(Label),
    NeedsHuman,
}

impl AutoLabel {
    pub fn is_auto(&self) -> bool {
        matches!(self, AutoLabel::AutoLabeled(_))
    }
}

/// A comment is auto-labeled non-toxic when the pre-annotator decided
/// non-toxic or scored it at most 3. Nothing is ever auto-labeled toxic.
pub fn auto_label(annotation: &CotAnnotation) -> AutoLabel {
    if annotation.decision == ToxicityClass::NonToxic || annotation.score <= AUTO_LABEL_MAX_SCORE {
        AutoLabel::AutoLabeled(Label::auto_non_toxic())
    } else {
        AutoLabel::NeedsHuman
    }
}
