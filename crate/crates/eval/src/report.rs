//! Result tables in the aligned, leading-zero-free layout.

use toxi_core::stats::{format_percent, format_ratio, ClassReport, TextTable};

use crate::run::EvalResult;

pub const RESULT_HEADERS: [&str; 8] =
    ["Configuration", "0 P", "0 R", "0 F1", "1 P", "1 R", "1 F1", "Acc"];

/// One row per labeled report: class 0 is non-toxic, class 1 toxic.
pub fn results_table<'a>(rows: impl IntoIterator<Item = (String, &'a ClassReport)>) -> TextTable {
    let mut table = TextTable::new(RESULT_HEADERS);
    for (label, r) in rows {
        table.push([
            label,
            format_ratio(r.non_toxic.precision),
            format_ratio(r.non_toxic.recall),
            format_ratio(r.non_toxic.f1),
            format_ratio(r.toxic.precision),
            format_ratio(r.toxic.recall),
            format_ratio(r.toxic.f1),
            format_ratio(r.accuracy),
        ]);
    }
    table
}

/// Row label `adapter (prompt)`, or just the adapter when it ignores prompts.
pub fn row_label(result: &EvalResult) -> String {
    if result.uses_prompt {
        format!("{} ({})", result.adapter, result.prompt.label())
    } else {
        result.adapter.clone()
    }
}

/// Results table followed by the invalid rate and accuracy interval of each run.
pub fn render_results(results: &[EvalResult]) -> String {
    let mut out = results_table(results.iter().map(|r| (row_label(r), &r.report))).render();
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{}: n={} invalid={} ({}) acc 95% CI [{}, {}] prompt={}\n",
            row_label(r),
            r.report.n,
            r.invalid,
            format_percent(r.invalid_rate),
            format_ratio(r.accuracy_interval.lo),
            format_ratio(r.accuracy_interval.hi),
            r.prompt_hash,
        ));
    }
    out
}
