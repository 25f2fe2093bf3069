//! Translation of a labeled subset for cross-lingual evaluation.

use serde::{Deserialize, Serialize};
use tracing::{info, warn};
use toxi_core::text::fold;
use toxi_preannotate::{with_retry, ChatClient, ChatRequest, RetryPolicy};

use crate::run::BenchItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    En2Fr,
    Fr2En,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::En2Fr => "en2fr",
            Direction::Fr2En => "fr2en",
        }
    }

    fn target_name(self) -> &'static str {
        match self {
            Direction::En2Fr => "French",
            Direction::Fr2En => "English",
        }
    }

    fn target_stopwords(self) -> &'static [&'static str] {
        match self {
            Direction::En2Fr => FR_STOPWORDS,
            Direction::Fr2En => EN_STOPWORDS,
        }
    }

    fn source_stopwords(self) -> &'static [&'static str] {
        match self {
            Direction::En2Fr => EN_STOPWORDS,
            Direction::Fr2En => FR_STOPWORDS,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en2fr" => Ok(Direction::En2Fr),
            "fr2en" => Ok(Direction::Fr2En),
            other => Err(format!("unknown direction {other:?} (expected en2fr or fr2en)")),
        }
    }
}

const FR_STOPWORDS: &[&str] = &[
    "le", "la", "les", "un", "une", "des", "du", "de", "et", "est", "que", "qui", "pas", "ne", "je", "tu", "il",
    "elle", "nous", "vous", "ils", "ce", "cette", "pour", "dans", "sur", "avec", "mais", "ou", "sont", "au", "aux",
];

const EN_STOPWORDS: &[&str] = &[
    "the", "a", "an", "and", "is", "are", "was", "that", "this", "of", "to", "in", "it", "you", "he", "she", "we",
    "they", "not", "for", "on", "with", "but", "or", "be", "have", "what", "do", "your", "my",
];

/// Whether `text` already reads as the target language: it contains more
/// target-language stopwords than source-language ones.
pub fn looks_like_target(text: &str, direction: Direction) -> bool {
    let folded = fold(text);
    let words: Vec<&str> = folded.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let count = |list: &[&str]| words.iter().filter(|w| list.contains(w)).count();
    let target = count(direction.target_stopwords());
    target > 0 && target > count(direction.source_stopwords())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedItem {
    pub id: String,
    pub label: toxi_core::ToxicityClass,
    pub original: String,
    pub translated: String,
    pub direction: Direction,
    /// The source already was in the target language and was not sent.
    pub passthrough: bool,
}

impl TranslatedItem {
    pub fn bench_item(&self) -> BenchItem {
        BenchItem { id: self.id.clone(), text: self.translated.clone(), label: self.label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationOutcome {
    pub items: Vec<TranslatedItem>,
    /// Ids dropped because translation failed.
    pub excluded: Vec<String>,
}

pub fn translation_prompt(text: &str, direction: Direction) -> String {
    format!(
        "Translate the following message into fluent {}. Keep its tone, slang and insults. \
         Answer with the translation only.\n\n{}",
        direction.target_name(),
        text
    )
}

/// Translates `items` one by one. Labels travel unchanged; failed or empty
/// translations are dropped and reported.
pub fn translate_subset(
    items: &[BenchItem],
    client: &dyn ChatClient,
    direction: Direction,
    retry: &RetryPolicy,
) -> TranslationOutcome {
    let mut out = TranslationOutcome { items: Vec::with_capacity(items.len()), excluded: Vec::new() };
    for item in items {
        if looks_like_target(&item.text, direction) {
            out.items.push(TranslatedItem {
                id: item.id.clone(),
                label: item.label,
                original: item.text.clone(),
                translated: item.text.clone(),
                direction,
                passthrough: true,
            });
            continue;
        }
        let request = ChatRequest::new(format!("translate:{}:{}", direction.as_str(), item.id), translation_prompt(&item.text, direction));
        match with_retry(client, &request, retry) {
            Ok(text) if !text.trim().is_empty() => out.items.push(TranslatedItem {
                id: item.id.clone(),
                label: item.label,
                original: item.text.clone(),
                translated: text.trim().to_string(),
                direction,
                passthrough: false,
            }),
            Ok(_) => {
                warn!(id = %item.id, "empty translation, item excluded");
                out.excluded.push(item.id.clone());
            }
            Err(e) => {
                warn!(id = %item.id, "translation failed, item excluded: {e}");
                out.excluded.push(item.id.clone());
            }
        }
    }
    info!(translated = out.items.len(), excluded = out.excluded.len(), "translation done");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_language() {
        assert!(looks_like_target("Je ne sais pas ce que tu veux dire", Direction::En2Fr));
        assert!(!looks_like_target("You are not welcome in this thread", Direction::En2Fr));
        assert!(looks_like_target("You are not welcome in this thread", Direction::Fr2En));
        assert!(!looks_like_target("lol", Direction::En2Fr));
    }

    #[test]
    fn direction_parse() {
        assert_eq!("en2fr".parse::<Direction>(), Ok(Direction::En2Fr));
        assert!("de2fr".parse::<Direction>().is_err());
    }
}
