//! Regex-based PII scrubbing.
//!
//! Matches are replaced by ASCII placeholders (`<email>`, `<url>`, ...) that
//! none of the patterns can match again, which makes [`scrub_pii`] idempotent.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiKind {
    Url,
    Email,
    Ip,
    Phone,
    Mention,
}

impl PiiKind {
    /// Application order. URLs first so that credentials or addresses inside
    /// a URL are swallowed by it; emails before mentions so that `a@b.fr` is
    /// not read as the mention `@b`; phones before IPs because a dotted
    /// French number contains an IPv4-shaped tail.
    pub const ORDER: [PiiKind; 5] = [
        PiiKind::Url,
        PiiKind::Email,
        PiiKind::Phone,
        PiiKind::Ip,
        PiiKind::Mention,
    ];

    pub fn placeholder(self) -> &'static str {
        match self {
            PiiKind::Url => "<url>",
            PiiKind::Email => "<email>",
            PiiKind::Ip => "<ip>",
            PiiKind::Phone => "<phone>",
            PiiKind::Mention => "<user>",
        }
    }

    fn pattern(self) -> &'static Regex {
        static PATTERNS: OnceLock<[Regex; 5]> = OnceLock::new();
        let all = PATTERNS.get_or_init(|| {
            let octet = r"(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])";
            let h = r"[0-9A-Fa-f]{1,4}";
            [
                Regex::new(r#"(?i)\b(?:https?://|www\.)[^\s<>"]*[^\s<>".,;:!?)\]'»]"#).unwrap(),
                Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b").unwrap(),
                Regex::new(&format!(
                    r"\b(?:{octet}\.){{3}}{octet}\b|\b(?:{h}:){{7}}{h}\b|\b(?:{h}:){{1,6}}:(?:{h}(?::{h}){{0,5}})?\b|::{h}(?::{h}){{0,5}}\b"
                ))
                .unwrap(),
                Regex::new(
                    r"(?:\+33[\s.-]?|\b0033[\s.-]?|\b0)[1-9](?:[\s.-]?[0-9]{2}){4}\b|\+[1-9][0-9]{0,2}(?:[\s.-]?[0-9]{2,4}){3,5}\b",
                )
                .unwrap(),
                Regex::new(r"@[\p{L}\p{N}_]+").unwrap(),
            ]
        });
        &all[self as usize]
    }
}

impl fmt::Display for PiiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PiiKind::Url => "url",
            PiiKind::Email => "email",
            PiiKind::Ip => "ip",
            PiiKind::Phone => "phone",
            PiiKind::Mention => "mention",
        };
        f.write_str(name)
    }
}

/// Replacement counts per category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RedactionReport(pub BTreeMap<PiiKind, usize>);

impl RedactionReport {
    pub fn count(&self, kind: PiiKind) -> usize {
        self.0.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn merge(&mut self, other: &RedactionReport) {
        for (k, v) in &other.0 {
            *self.0.entry(*k).or_default() += v;
        }
    }
}

pub fn scrub_pii(text: &str) -> (String, RedactionReport) {
    let mut out = text.to_string();
    let mut report = RedactionReport::default();
    for kind in PiiKind::ORDER {
        let re = kind.pattern();
        let n = re.find_iter(&out).count();
        if n > 0 {
            out = re.replace_all(&out, kind.placeholder()).into_owned();
            report.0.insert(kind, n);
        }
    }
    (out, report)
}

/// True when any PII pattern matches `text`.
pub fn contains_pii(text: &str) -> bool {
    PiiKind::ORDER.iter().any(|k| k.pattern().is_match(text))
}
