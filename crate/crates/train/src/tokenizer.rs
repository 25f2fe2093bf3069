//! Word-level tokenizer for the native backend.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const NEWLINE: &str = "\n";

const SPECIALS: [&str; 5] = [PAD, UNK, BOS, EOS, NEWLINE];

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"</?think>|<eos>|\(\d+(?:,\d+)+\)|\p{L}[\p{L}\p{M}'’-]*|\d+|\n|\S").expect("valid token regex")
    })
}

/// Splits text into surface tokens. Whitespace other than newlines is dropped
/// and a parenthesized tuple of integers is a single token.
pub fn split_tokens(text: &str) -> Vec<String> {
    pattern().find_iter(text).map(|m| m.as_str().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordTokenizer {
    vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl WordTokenizer {
    /// Vocabulary of every token seen in `texts` (sorted), after the specials.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words = BTreeSet::new();
        for t in texts {
            words.extend(split_tokens(t));
        }
        let vocab: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())))
            .collect();
        Self::from_vocab(vocab)
    }

    pub fn from_vocab(vocab: Vec<String>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        WordTokenizer { vocab, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_vocab(self.vocab)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn token(&self, id: u32) -> &str {
        self.vocab.get(id as usize).map_or(UNK, String::as_str)
    }

    pub fn bos(&self) -> u32 {
        self.id(BOS)
    }

    pub fn eos(&self) -> u32 {
        self.id(EOS)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_tokens(text).iter().map(|t| self.id(t)).collect()
    }

    /// Tokens joined by spaces; newlines are kept as line breaks.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id);
            if t == NEWLINE {
                out.push('\n');
                continue;
            }
            if !(out.is_empty() || out.ends_with('\n')) {
                out.push(' ');
            }
            out.push_str(t);
        }
        out
    }
}
