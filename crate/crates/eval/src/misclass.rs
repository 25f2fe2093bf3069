//! Listings of false positives and false negatives.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use toxi_core::text::single_line;

use crate::run::{BenchItem, EvalItem, EvalResult};

pub const FP_HEADING: &str = "Non-toxic but classified as toxic";
pub const FN_HEADING: &str = "Toxic but classified as non-toxic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassified {
    pub id: String,
    pub text: String,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationReport {
    pub adapter: String,
    pub false_positives: Vec<Misclassified>,
    pub false_negatives: Vec<Misclassified>,
    pub total_false_positives: usize,
    pub total_false_negatives: usize,
}

/// Picks up to `k` errors of each kind. When every error carries a
/// confidence, the most confident mistakes come first; otherwise benchmark
/// order is kept.
pub fn misclassification_report(result: &EvalResult, bench: &[BenchItem], k: usize) -> MisclassificationReport {
    let texts: HashMap<&str, &str> = bench.iter().map(|b| (b.id.as_str(), b.text.as_str())).collect();
    let pick = |errors: Vec<&EvalItem>, toxic_side: bool| -> Vec<Misclassified> {
        let mut errors = errors;
        if errors.iter().all(|e| e.confidence.is_some()) {
            // Stable sort keeps benchmark order among ties.
            errors.sort_by(|a, b| {
                let (ca, cb) = (a.confidence.unwrap(), b.confidence.unwrap());
                if toxic_side { cb.total_cmp(&ca) } else { ca.total_cmp(&cb) }
            });
        }
        errors
            .into_iter()
            .take(k)
            .map(|e| Misclassified {
                id: e.id.clone(),
                text: texts.get(e.id.as_str()).map(|t| t.to_string()).unwrap_or_default(),
                raw: e.raw.clone(),
                confidence: e.confidence,
            })
            .collect()
    };
    let fps: Vec<&EvalItem> = result.items.iter().filter(|i| i.is_false_positive()).collect();
    let fns: Vec<&EvalItem> = result.items.iter().filter(|i| i.is_false_negative()).collect();
    MisclassificationReport {
        adapter: result.adapter.clone(),
        total_false_positives: fps.len(),
        total_false_negatives: fns.len(),
        false_positives: pick(fps, true),
        false_negatives: pick(fns, false),
    }
}

impl MisclassificationReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (heading, list, total) in [
            (FP_HEADING, &self.false_positives, self.total_false_positives),
            (FN_HEADING, &self.false_negatives, self.total_false_negatives),
        ] {
            let _ = writeln!(out, "{heading} ({} of {total})", list.len());
            for m in list {
                let conf = m.confidence.map(|c| format!(" [{c:.3}]")).unwrap_or_default();
                let _ = writeln!(out, "- {}{conf}: {}", m.id, single_line(&m.text));
            }
            out.push('\n');
        }
        out
    }
}
