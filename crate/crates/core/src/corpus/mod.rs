//! Raw forum dump → anonymized, deduplicated, length-filtered corpus.

mod pii;

pub use pii::{contains_pii, scrub_pii, PiiKind, RedactionReport};

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;

use chrono::{DateTime, Datelike, Utc};
use hmac::{Hmac, Mac};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::text::word_count;

pub const ID_PREFIX: &str = "anon_msg_";
pub const DEFAULT_MIN_WORDS: usize = 5;
pub const DEFAULT_MAX_WORDS: usize = 25;
pub const DEFAULT_WEAK_SIGNAL: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("anonymization salt must not be empty")]
    EmptySalt,
    #[error("salt is not valid hex: {0}")]
    BadSalt(String),
    #[error("invalid word bounds: min {min} > max {max}")]
    WordBounds { min: usize, max: usize },
}

/// One record from a forum dump, before anonymization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub source_id: String,
    pub author: String,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub forum: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordState {
    Raw,
    Preannotated,
    Queued,
    Labeled,
}

/// An anonymized comment. Carries no author or source identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub text: String,
    pub timestamp: Option<DateTime<Utc>>,
    pub word_count: usize,
    #[serde(default)]
    pub weak_signal: Option<f64>,
    pub state: RecordState,
}

impl CommentRecord {
    /// Builds a record with no metadata; mostly useful for fixtures.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        CommentRecord {
            id: id.into(),
            word_count: word_count(&text),
            text,
            timestamp: None,
            weak_signal: None,
            state: RecordState::Raw,
        }
    }
}

/// True for `anon_msg_` followed by exactly 12 lowercase hex characters.
pub fn is_anonymous_id(id: &str) -> bool {
    id.strip_prefix(ID_PREFIX).is_some_and(|h| {
        h.len() == 12 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    })
}

/// Keyed hash of the source id: `anon_msg_` + first 12 hex chars of
/// HMAC-SHA256(salt, source_id).
pub fn assign_anonymous_id(raw: &RawRecord, salt: &[u8]) -> Result<String, CorpusError> {
    anonymous_id(&raw.source_id, salt)
}

pub fn anonymous_id(source_id: &str, salt: &[u8]) -> Result<String, CorpusError> {
    if salt.is_empty() {
        return Err(CorpusError::EmptySalt);
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(salt).expect("hmac accepts any key length");
    mac.update(source_id.as_bytes());
    let digest = hex::encode(mac.finalize().into_bytes());
    Ok(format!("{ID_PREFIX}{}", &digest[..12]))
}

pub fn parse_salt(hex_salt: &str) -> Result<Vec<u8>, CorpusError> {
    let bytes = hex::decode(hex_salt.trim()).map_err(|e| CorpusError::BadSalt(e.to_string()))?;
    if bytes.is_empty() {
        return Err(CorpusError::EmptySalt);
    }
    Ok(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooShort,
    TooLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthVerdict {
    Keep,
    Drop(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordBounds {
    pub min: usize,
    pub max: usize,
}

impl Default for WordBounds {
    fn default() -> Self {
        WordBounds {
            min: DEFAULT_MIN_WORDS,
            max: DEFAULT_MAX_WORDS,
        }
    }
}

impl WordBounds {
    pub fn new(min: usize, max: usize) -> Result<Self, CorpusError> {
        if min > max {
            return Err(CorpusError::WordBounds { min, max });
        }
        Ok(WordBounds { min, max })
    }

    /// Placeholders such as `<url>` are a single token and count as one word.
    pub fn check(&self, text: &str) -> LengthVerdict {
        let n = word_count(text);
        if n < self.min {
            LengthVerdict::Drop(DropReason::TooShort)
        } else if n > self.max {
            LengthVerdict::Drop(DropReason::TooLong)
        } else {
            LengthVerdict::Keep
        }
    }
}

pub fn filter_length(text: &str) -> LengthVerdict {
    WordBounds::default().check(text)
}

/// Supplies the optional weak-supervision priority of a record.
pub trait WeakSignalScorer: Sync {
    fn score(&self, record: &RawRecord) -> Option<f64>;
}

/// Same priority for every record.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSignal(pub f64);

impl Default for ConstantSignal {
    fn default() -> Self {
        ConstantSignal(DEFAULT_WEAK_SIGNAL)
    }
}

impl WeakSignalScorer for ConstantSignal {
    fn score(&self, _record: &RawRecord) -> Option<f64> {
        Some(self.0)
    }
}

/// Removes records whose text already appeared, keeping the earliest one.
/// Records without a timestamp lose against any dated duplicate; among equal
/// timestamps the first occurrence wins. Input order is otherwise preserved.
pub fn dedupe_exact(corpus: Vec<CommentRecord>) -> Vec<CommentRecord> {
    let mut winner: HashMap<&str, usize> = HashMap::new();
    let earlier = |a: &Option<DateTime<Utc>>, b: &Option<DateTime<Utc>>| match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    for (i, rec) in corpus.iter().enumerate() {
        match winner.entry(rec.text.as_str()) {
            Entry::Vacant(e) => {
                e.insert(i);
            }
            Entry::Occupied(mut e) => {
                if earlier(&rec.timestamp, &corpus[*e.get()].timestamp) {
                    e.insert(i);
                }
            }
        }
    }
    let mut keep = vec![false; corpus.len()];
    for i in winner.into_values() {
        keep[i] = true;
    }
    corpus
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Month,
    Year,
}

/// Histogram bucket; `Unknown` sorts after every dated bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeBucket {
    Year(i32),
    Month(i32, u32),
    Unknown,
}

impl fmt::Display for TimeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeBucket::Year(y) => write!(f, "{y}"),
            TimeBucket::Month(y, m) => write!(f, "{y}-{m:02}"),
            TimeBucket::Unknown => f.write_str("unknown"),
        }
    }
}

impl Serialize for TimeBucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Counts per bucket in ascending order. Undated records land in
/// [`TimeBucket::Unknown`].
pub fn temporal_histogram<'a>(
    corpus: impl IntoIterator<Item = &'a CommentRecord>,
    granularity: Granularity,
) -> Vec<(TimeBucket, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for rec in corpus {
        let bucket = match (rec.timestamp, granularity) {
            (None, _) => TimeBucket::Unknown,
            (Some(t), Granularity::Year) => TimeBucket::Year(t.year()),
            (Some(t), Granularity::Month) => TimeBucket::Month(t.year(), t.month()),
        };
        *counts.entry(bucket).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub salt: Vec<u8>,
    pub bounds: WordBounds,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub ingested: usize,
    pub empty_text: usize,
    pub after_dedupe: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub retained: usize,
    pub redactions: RedactionReport,
}

/// Scrubs, anonymizes, deduplicates and length-filters a batch of raw
/// records. Output is sorted by `(timestamp, id)`.
pub fn ingest(
    raw: &[RawRecord],
    config: &IngestConfig,
    scorer: &dyn WeakSignalScorer,
) -> Result<(Vec<CommentRecord>, IngestReport), CorpusError> {
    if config.salt.is_empty() {
        return Err(CorpusError::EmptySalt);
    }
    let scrubbed: Vec<(Option<CommentRecord>, RedactionReport)> = raw
        .par_iter()
        .map(|r| {
            if r.text.trim().is_empty() {
                return Ok((None, RedactionReport::default()));
            }
            let (text, report) = scrub_pii(&r.text);
            let record = CommentRecord {
                id: assign_anonymous_id(r, &config.salt)?,
                word_count: word_count(&text),
                text,
                timestamp: Some(r.timestamp),
                weak_signal: scorer.score(r).map(|s| s.clamp(0.0, 1.0)),
                state: RecordState::Raw,
            };
            Ok((Some(record), report))
        })
        .collect::<Result<_, CorpusError>>()?;

    let mut report = IngestReport {
        ingested: raw.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(scrubbed.len());
    for (rec, redactions) in scrubbed {
        report.redactions.merge(&redactions);
        match rec {
            Some(r) => records.push(r),
            None => report.empty_text += 1,
        }
    }

    let records = dedupe_exact(records);
    report.after_dedupe = records.len();

    let mut kept: Vec<CommentRecord> = records
        .into_iter()
        .filter(|r| match config.bounds.check(&r.text) {
            LengthVerdict::Keep => true,
            LengthVerdict::Drop(DropReason::TooShort) => {
                report.too_short += 1;
                false
            }
            LengthVerdict::Drop(DropReason::TooLong) => {
                report.too_long += 1;
                false
            }
        })
        .collect();
    kept.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    report.retained = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn raw(id: &str, text: &str, year: i32) -> RawRecord {
        RawRecord {
            source_id: id.to_string(),
            author: format!("author-{id}"),
            text: text.to_string(),
            timestamp: Utc.with_ymd_and_hms(year, 3, 1, 12, 0, 0).unwrap(),
            forum: "18-25".to_string(),
        }
    }

    fn dated(id: &str, text: &str, ts: Option<i64>) -> CommentRecord {
        CommentRecord {
            timestamp: ts.map(|s| Utc.timestamp_opt(s, 0).unwrap()),
            ..CommentRecord::new(id, text)
        }
    }

    #[test]
    fn length_filter_bounds() {
        assert_eq!(filter_length("un deux trois quatre"), LengthVerdict::Drop(DropReason::TooShort));
        assert_eq!(filter_length("un deux trois quatre cinq"), LengthVerdict::Keep);
        let words = vec!["mot"; 25].join(" ");
        assert_eq!(filter_length(&words), LengthVerdict::Keep);
        let words = vec!["mot"; 26].join(" ");
        assert_eq!(filter_length(&words), LengthVerdict::Drop(DropReason::TooLong));
        assert_eq!(filter_length("voir <url> et <email> stp"), LengthVerdict::Keep);
    }

    #[test]
    fn anonymous_id_shape_and_determinism() {
        let r = raw("topic-1/msg-42", "salut", 2012);
        let a = assign_anonymous_id(&r, b"pepper").unwrap();
        let b = assign_anonymous_id(&r, b"pepper").unwrap();
        assert_eq!(a, b);
        assert!(is_anonymous_id(&a), "{a}");
        assert_ne!(a, assign_anonymous_id(&r, b"other").unwrap());
        assert_eq!(assign_anonymous_id(&r, b""), Err(CorpusError::EmptySalt));
        assert!(is_anonymous_id("anon_msg_c990da7c4d65"));
        assert!(!is_anonymous_id("anon_msg_C990DA7C4D65"));
        assert!(!is_anonymous_id("anon_msg_c990da7c4d6"));
    }

    #[test]
    fn anonymous_ids_do_not_collide_on_sample() {
        let salt = b"collision-check";
        let ids: HashSet<String> = (0..100_000)
            .map(|i| anonymous_id(&format!("msg-{i}"), salt).unwrap())
            .collect();
        assert_eq!(ids.len(), 100_000);
    }

    #[test]
    fn salt_parsing() {
        assert_eq!(parse_salt("00ff").unwrap(), vec![0, 255]);
        assert_eq!(parse_salt(""), Err(CorpusError::EmptySalt));
        assert!(matches!(parse_salt("zz"), Err(CorpusError::BadSalt(_))));
    }

    #[test]
    fn histogram_cases() {
        assert!(temporal_histogram(&[], Granularity::Year).is_empty());
        let y2011 = Utc.with_ymd_and_hms(2011, 5, 1, 0, 0, 0).unwrap().timestamp();
        let y2025 = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap().timestamp();
        let corpus = vec![
            dated("a", "x", Some(y2025)),
            dated("b", "x", Some(y2011)),
            dated("c", "x", Some(y2011 + 10)),
            dated("d", "x", Some(y2011 + 20)),
        ];
        assert_eq!(
            temporal_histogram(&corpus, Granularity::Year),
            vec![(TimeBucket::Year(2011), 3), (TimeBucket::Year(2025), 1)]
        );
        let mut with_unknown = corpus.clone();
        with_unknown.push(dated("e", "x", None));
        let h = temporal_histogram(&with_unknown, Granularity::Month);
        assert_eq!(h.first().unwrap().0.to_string(), "2011-05");
        assert_eq!(h.last().unwrap(), &(TimeBucket::Unknown, 1));
    }

    #[test]
    fn dedupe_keeps_earliest() {
        let corpus = vec![dated("late", "même texte", Some(200)), dated("early", "même texte", Some(100))];
        let out = dedupe_exact(corpus);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "early");

        let unique = vec![dated("a", "un", Some(1)), dated("b", "deux", None)];
        assert_eq!(dedupe_exact(unique.clone()), unique);

        let undated_first = vec![dated("u", "t", None), dated("d", "t", Some(5))];
        assert_eq!(dedupe_exact(undated_first)[0].id, "d");
    }

    #[test]
    fn ingest_end_to_end() {
        let records = vec![
            raw("1", "écris-moi à jean@ex.fr pour le match de ce soir", 2013),
            raw("2", "trop court", 2012),
            raw("3", "écris-moi à paul@ex.fr pour le match de ce soir", 2014),
            raw("4", "   ", 2012),
            raw("5", "les modos de ce forum sont vraiment au top franchement", 2011),
        ];
        let cfg = IngestConfig {
            salt: b"s".to_vec(),
            bounds: WordBounds::default(),
        };
        let (out, report) = ingest(&records, &cfg, &ConstantSignal::default()).unwrap();
        assert_eq!(report.ingested, 5);
        assert_eq!(report.empty_text, 1);
        // the two email variants collapse to the same scrubbed text
        assert_eq!(report.after_dedupe, 3);
        assert_eq!(report.too_short, 1);
        assert_eq!(report.retained, 2);
        assert_eq!(report.redactions.count(PiiKind::Email), 2);
        assert_eq!(out.len(), 2);
        assert!(out[0].timestamp < out[1].timestamp);
        for r in &out {
            assert!(is_anonymous_id(&r.id));
            assert!(!contains_pii(&r.text));
            assert_eq!(r.weak_signal, Some(0.5));
            assert!((5..=25).contains(&r.word_count));
        }
        let json = serde_json::to_string(&out[0]).unwrap();
        assert!(!json.contains("author"));
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<CommentRecord>> {
        proptest::collection::vec(
            (0u8..12, proptest::option::of(0i64..1_000_000_000)),
            0..60,
        )
        .prop_map(|items| {
            items
                .into_iter()
                .enumerate()
                .map(|(i, (t, ts))| dated(&format!("r{i}"), &format!("texte {t}"), ts))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn dedupe_matches_distinct_text_count(corpus in arb_corpus()) {
            let distinct: HashSet<_> = corpus.iter().map(|r| r.text.clone()).collect();
            let ids: HashSet<_> = corpus.iter().map(|r| r.id.clone()).collect();
            let out = dedupe_exact(corpus);
            prop_assert_eq!(out.len(), distinct.len());
            let out_texts: HashSet<_> = out.iter().map(|r| r.text.clone()).collect();
            prop_assert_eq!(out_texts.len(), out.len());
            prop_assert!(out.iter().all(|r| ids.contains(&r.id)));
        }

        #[test]
        fn histogram_conserves_count(corpus in arb_corpus(), monthly in any::<bool>()) {
            let g = if monthly { Granularity::Month } else { Granularity::Year };
            let h = temporal_histogram(&corpus, g);
            prop_assert_eq!(h.iter().map(|(_, c)| c).sum::<usize>(), corpus.len());
            prop_assert!(h.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
