//! Tolerant parsing of model outputs back into annotation fields.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompts::ChainStep;
use super::{CotAnnotation, Tone, MAX_SCORE};
use crate::taxonomy::{validate_vector, ImplicitCategory, ToxicityClass, ToxicityVector};
use crate::text::{fold, single_line};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotParseError {
    #[error("score_missing: no N/10 toxicity score found")]
    ScoreMissing,
    #[error("decision_missing: no oui/non after the conclusion question")]
    DecisionMissing,
}

/// Binary decision read from free text, or `Invalid` when none is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Toxic,
    NonToxic,
    Invalid,
}

impl Decision {
    pub fn class(self) -> Option<ToxicityClass> {
        match self {
            Decision::Toxic => Some(ToxicityClass::Toxic),
            Decision::NonToxic => Some(ToxicityClass::NonToxic),
            Decision::Invalid => None,
        }
    }
}

impl From<ToxicityClass> for Decision {
    fn from(c: ToxicityClass) -> Self {
        match c {
            ToxicityClass::Toxic => Decision::Toxic,
            ToxicityClass::NonToxic => Decision::NonToxic,
        }
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

fn score_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"\b(10|[0-9])\s*/\s*10\b")
}

/// First yes/no style answer in `text`, ignoring case and accents.
/// `pas toxique` / `not toxic` read as non-toxic.
pub fn scan_decision(text: &str) -> Option<ToxicityClass> {
    let folded = fold(text);
    let tokens: Vec<&str> = folded
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|t| t.trim_matches('-'))
        .filter(|t| !t.is_empty())
        .collect();
    for (i, tok) in tokens.iter().enumerate() {
        let negated = i > 0 && matches!(tokens[i - 1], "pas" | "not");
        match *tok {
            "oui" | "yes" => return Some(ToxicityClass::Toxic),
            "non" | "no" | "non-toxique" | "non-toxic" | "nontoxic" => {
                return Some(ToxicityClass::NonToxic)
            }
            "toxique" | "toxic" => {
                return Some(if negated {
                    ToxicityClass::NonToxic
                } else {
                    ToxicityClass::Toxic
                })
            }
            _ => {}
        }
    }
    None
}

/// Folded text following the last conclusion marker, with the conclusion
/// question itself removed. `None` when no marker is present.
fn after_conclusion(text: &str) -> Option<String> {
    static Q: OnceLock<Regex> = OnceLock::new();
    let folded = fold(text);
    let at = folded.rfind("en conclusion")?;
    let rest = &folded[at + "en conclusion".len()..];
    let question = re(&Q, r"^[\s,:]*(?:ce (?:message|commentaire) est-il toxique)?\s*\??");
    let cut = question.find(rest).map_or(0, |m| m.end());
    Some(rest[cut..].to_string())
}

/// Decision of an evaluated model: scans after the last conclusion marker,
/// or the whole text when there is none.
pub fn parse_decision(raw: &str) -> Decision {
    let region = after_conclusion(raw).unwrap_or_else(|| raw.to_string());
    scan_decision(&region).map_or(Decision::Invalid, Decision::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Summary,
    Tones,
    Vector,
    Implicit,
    Doubts,
    Score,
    Justification,
}

const FIELD_KEYS: &[(&str, Field)] = &[
    ("resume", Field::Summary),
    ("tons identifies", Field::Tones),
    ("tons", Field::Tones),
    ("vecteur de toxicite", Field::Vector),
    ("categories implicites", Field::Implicit),
    ("doutes", Field::Doubts),
    ("score de toxicite", Field::Score),
    ("justification", Field::Justification),
];

/// Splits a labeled line such as `**Doutes :** texte` into its field and the
/// original-text value after the first colon.
fn labeled_line(line: &str) -> Option<(Field, String)> {
    let trimmed = line.trim().trim_start_matches(['*', '#', '-', ' ', '\t']);
    let folded = fold(trimmed);
    let (_, field) = FIELD_KEYS.iter().find(|(k, _)| folded.starts_with(k))?;
    let value = trimmed
        .split_once(':')
        .map(|(_, v)| v.trim().trim_start_matches('*').trim())
        .unwrap_or("");
    Some((*field, value.to_string()))
}

pub fn parse_tones(text: &str) -> Vec<Tone> {
    static R: OnceLock<Regex> = OnceLock::new();
    let r = re(&R, r"(\p{L}[\p{L}\p{M}'’ -]*?)\s*\(\s*([0-9]{1,3})\s*%\s*\)");
    r.captures_iter(text)
        .filter_map(|c| {
            let confidence: u8 = c[2].parse().ok().filter(|v| *v <= 100)?;
            Some(Tone {
                name: c[1].trim().to_string(),
                confidence,
            })
        })
        .collect()
}

/// Reads `(s,h,v,r,a,i)` or `S0 H2 V0 R0 A1 I1`. Out-of-range values yield `None`.
pub fn parse_vector(text: &str) -> Option<ToxicityVector> {
    static LETTERS: OnceLock<Regex> = OnceLock::new();
    static TUPLE: OnceLock<Regex> = OnceLock::new();
    let letters = re(&LETTERS, r"\b([SHVRAI])\s*[:=]?\s*([0-9]+)\b");
    let mut by_letter: [Option<i64>; 6] = [None; 6];
    for c in letters.captures_iter(text) {
        let idx = "SHVRAI".find(&c[1]).unwrap();
        by_letter[idx].get_or_insert(c[2].parse().unwrap_or(i64::MAX));
    }
    if by_letter.iter().all(Option::is_some) {
        return validate_vector(by_letter.map(Option::unwrap)).ok();
    }
    let tuple = re(
        &TUPLE,
        r"\(\s*([0-9]+)\s*[,;]\s*([0-9]+)\s*[,;]\s*([0-9]+)\s*[,;]\s*([0-9]+)\s*[,;]\s*([0-9]+)\s*[,;]\s*([0-9]+)\s*\)",
    );
    let c = tuple.captures(text)?;
    let mut v = [0i64; 6];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = c[i + 1].parse().unwrap_or(i64::MAX);
    }
    validate_vector(v).ok()
}

fn parse_implicit(value: &str) -> Vec<ImplicitCategory> {
    let mut out: Vec<ImplicitCategory> = value
        .split([',', ';'])
        .filter_map(|s| ImplicitCategory::from_label(s.trim().trim_end_matches('.')).ok())
        .collect();
    out.dedup();
    out
}

#[derive(Default)]
struct Draft {
    summary: Option<String>,
    tones: Vec<Tone>,
    taxonomy: Option<ToxicityVector>,
    implicit: Vec<ImplicitCategory>,
    doubts: Option<String>,
    score: Option<u8>,
    justification: Option<String>,
    decision: Option<ToxicityClass>,
}

impl Draft {
    fn absorb_labeled_lines(&mut self, text: &str) {
        for line in text.lines() {
            let Some((field, value)) = labeled_line(line) else {
                continue;
            };
            match field {
                Field::Summary => self.summary = Some(value),
                Field::Tones => self.tones = parse_tones(&value),
                Field::Vector => self.taxonomy = parse_vector(&value).or(self.taxonomy),
                Field::Implicit => self.implicit = parse_implicit(&value),
                Field::Doubts => self.doubts = Some(value),
                Field::Score => {
                    if let Some(c) = score_re().captures(&value) {
                        self.score = c[1].parse().ok();
                    }
                }
                Field::Justification => self.justification = Some(value),
            }
        }
    }

    fn finish(self, text: &str) -> Result<CotAnnotation, CotParseError> {
        let score = match self.score {
            Some(s) => s,
            None => score_re()
                .captures(text)
                .and_then(|c| c[1].parse().ok())
                .ok_or(CotParseError::ScoreMissing)?,
        };
        debug_assert!(score <= MAX_SCORE);
        let decision = self.decision.ok_or(CotParseError::DecisionMissing)?;
        Ok(CotAnnotation {
            summary: self.summary.unwrap_or_default(),
            tones: self.tones,
            taxonomy: self.taxonomy,
            implicit: self.implicit,
            doubts: self.doubts.unwrap_or_default(),
            score,
            justification: self.justification.unwrap_or_default(),
            decision,
            raw_steps: Vec::new(),
        })
    }
}

/// Parses a full CoT output (annotation chain or fine-tuned model).
///
/// The score is taken from the last `Score de toxicité` line, falling back to
/// the first `N/10` anywhere. The decision is the first yes/no answer after
/// the last conclusion question.
pub fn parse_cot_output(text: &str) -> Result<CotAnnotation, CotParseError> {
    let mut draft = Draft::default();
    draft.absorb_labeled_lines(text);
    draft.decision = after_conclusion(text).and_then(|r| scan_decision(&r));
    draft.finish(text)
}

/// Assembles an annotation from the six per-step completions of the chain.
/// Steps whose completion lacks its label fall back to the whole completion.
pub fn parse_step_completion(completions: &[String]) -> Result<CotAnnotation, CotParseError> {
    let mut draft = Draft::default();
    for (step, completion) in ChainStep::ALL.iter().zip(completions) {
        draft.absorb_labeled_lines(completion);
        match step {
            ChainStep::Summary if draft.summary.is_none() => {
                draft.summary = Some(single_line(completion))
            }
            ChainStep::Tones if draft.tones.is_empty() => draft.tones = parse_tones(completion),
            ChainStep::Taxonomy if draft.taxonomy.is_none() => {
                draft.taxonomy = parse_vector(completion)
            }
            ChainStep::ImplicitCategories if draft.implicit.is_empty() => {
                draft.implicit = parse_implicit(&single_line(completion))
            }
            ChainStep::Doubts if draft.doubts.is_none() => {
                draft.doubts = Some(single_line(completion))
            }
            ChainStep::Verdict => {
                draft.decision = after_conclusion(completion)
                    .and_then(|r| scan_decision(&r))
                    .or_else(|| {
                        completion
                            .lines()
                            .rev()
                            .find(|l| !l.trim().is_empty())
                            .and_then(scan_decision)
                    });
            }
            _ => {}
        }
    }
    let verdict = completions.get(5).map(String::as_str).unwrap_or("");
    draft.finish(verdict)
}
