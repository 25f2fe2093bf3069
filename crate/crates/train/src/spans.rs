//! Reasoning/answer segmentation of a tokenized training sequence.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toxi_core::text::fold;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("unbalanced think delimiters at token {0}")]
    Unbalanced(usize),
    #[error("no think block in the completion")]
    NoThinkBlock,
    #[error("no final oui/non answer after the last think block")]
    MissingAnswer,
    #[error("prompt length {prompt_len} exceeds sequence length {len}")]
    PromptTooLong { prompt_len: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkMarkers {
    pub open: String,
    pub close: String,
}

impl Default for ThinkMarkers {
    fn default() -> Self {
        ThinkMarkers { open: "<think>".into(), close: "</think>".into() }
    }
}

/// Token index ranges of one training sequence. Indices are absolute
/// positions in the full (prompt + completion) sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanSegmentation {
    /// Reasoning span: tokens strictly inside think blocks.
    pub r: Vec<Range<usize>>,
    /// The final answer token(s).
    pub y: Range<usize>,
    /// Completion tokens in neither span: delimiters, the text between
    /// blocks and the conclusion question.
    #[serde(default)]
    pub scaffold: Vec<Range<usize>>,
}

impl SpanSegmentation {
    /// Completion made of the answer alone (binary target): the first
    /// completion token is y and anything after it is scaffold.
    pub fn answer_only(prompt_len: usize, len: usize) -> Result<Self, SegmentError> {
        if prompt_len >= len {
            return Err(SegmentError::MissingAnswer);
        }
        let scaffold: Vec<_> = (prompt_len + 1 < len).then_some(prompt_len + 1..len).into_iter().collect();
        Ok(SpanSegmentation { r: Vec::new(), y: prompt_len..prompt_len + 1, scaffold })
    }

    /// Same segmentation with the scaffold merged into r, so that every
    /// completion token is supervised.
    pub fn with_scaffold_in_r(&self) -> Self {
        let mut r: Vec<Range<usize>> = self.r.iter().chain(&self.scaffold).cloned().collect();
        r.sort_by_key(|r| r.start);
        let mut merged: Vec<Range<usize>> = Vec::with_capacity(r.len());
        for range in r {
            match merged.last_mut() {
                Some(last) if last.end == range.start => last.end = range.end,
                _ => merged.push(range),
            }
        }
        SpanSegmentation { r: merged, y: self.y.clone(), scaffold: Vec::new() }
    }

    pub fn n_r(&self) -> usize {
        self.r.iter().map(|r| r.len()).sum()
    }

    pub fn n_y(&self) -> usize {
        self.y.len()
    }

    pub fn r_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.r.iter().flat_map(|r| r.clone())
    }
}

fn is_answer(token: &str) -> bool {
    matches!(
        fold(token).as_str(),
        "oui" | "non" | "toxique" | "non-toxique" | "yes" | "no" | "toxic" | "non-toxic"
    )
}

/// Splits the completion part (`tokens[prompt_len..]`) into reasoning and
/// answer spans. The answer is the last oui/non-style token after the last
/// closing delimiter; anything following it (e.g. an end-of-sequence token)
/// is scaffold.
pub fn segment_spans<S: AsRef<str>>(
    tokens: &[S],
    prompt_len: usize,
    markers: &ThinkMarkers,
) -> Result<SpanSegmentation, SegmentError> {
    if prompt_len > tokens.len() {
        return Err(SegmentError::PromptTooLong { prompt_len, len: tokens.len() });
    }
    let mut r = Vec::new();
    let mut scaffold = Vec::new();
    let mut outside_from = prompt_len;
    let mut open_at: Option<usize> = None;
    let mut last_close = None;
    for (i, t) in tokens.iter().enumerate().skip(prompt_len) {
        let t = t.as_ref();
        if t == markers.open {
            if open_at.is_some() {
                return Err(SegmentError::Unbalanced(i));
            }
            if outside_from < i + 1 {
                scaffold.push(outside_from..i + 1);
            }
            open_at = Some(i);
        } else if t == markers.close {
            let start = open_at.take().ok_or(SegmentError::Unbalanced(i))?;
            if start + 1 < i {
                r.push(start + 1..i);
            }
            outside_from = i;
            last_close = Some(i);
        }
    }
    if let Some(i) = open_at {
        return Err(SegmentError::Unbalanced(i));
    }
    let last_close = last_close.ok_or(SegmentError::NoThinkBlock)?;
    let answer = (last_close + 1..tokens.len())
        .rev()
        .find(|&i| is_answer(tokens[i].as_ref()))
        .ok_or(SegmentError::MissingAnswer)?;
    if outside_from < answer {
        scaffold.push(outside_from..answer);
    }
    if answer + 1 < tokens.len() {
        scaffold.push(answer + 1..tokens.len());
    }
    Ok(SpanSegmentation { r, y: answer..answer + 1, scaffold })
}
