use std::fmt;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{format_percent, wilson_interval, BinomialSample, Interval, StatsError, TextTable};
use crate::taxonomy::{FourWayDecision, ToxicityClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementRow {
    GroupedYes,
    Yes,
    MaybeYes,
    GroupedNo,
    MaybeNo,
    No,
}

impl AgreementRow {
    /// Display order: each grouped row followed by its members.
    pub const ALL: [AgreementRow; 6] = [
        AgreementRow::GroupedYes,
        AgreementRow::Yes,
        AgreementRow::MaybeYes,
        AgreementRow::GroupedNo,
        AgreementRow::MaybeNo,
        AgreementRow::No,
    ];

    fn matches(self, d: FourWayDecision) -> bool {
        match self {
            AgreementRow::GroupedYes => d.is_grouped_yes(),
            AgreementRow::GroupedNo => d.is_grouped_no(),
            AgreementRow::Yes => d == FourWayDecision::Yes,
            AgreementRow::MaybeYes => d == FourWayDecision::MaybeYes,
            AgreementRow::MaybeNo => d == FourWayDecision::MaybeNo,
            AgreementRow::No => d == FourWayDecision::No,
        }
    }

    pub fn is_grouped(self) -> bool {
        matches!(self, AgreementRow::GroupedYes | AgreementRow::GroupedNo)
    }
}

impl fmt::Display for AgreementRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgreementRow::GroupedYes => "Grouped yes",
            AgreementRow::Yes => "  Yes",
            AgreementRow::MaybeYes => "  Maybe yes",
            AgreementRow::GroupedNo => "Grouped no",
            AgreementRow::MaybeNo => "  Maybe no",
            AgreementRow::No => "  No",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub row: AgreementRow,
    pub count: u64,
    pub rate: f64,
    pub interval: Interval,
}

impl AgreementCell {
    /// `"98% [96.0, 99.4%]"`.
    pub fn render(&self) -> String {
        format!(
            "{} [{:.1}, {:.1}%]",
            format_percent(self.rate),
            self.interval.lo * 100.0,
            self.interval.hi * 100.0
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementColumn {
    pub reference: ToxicityClass,
    pub n: u64,
    pub cells: Vec<AgreementCell>,
}

impl AgreementColumn {
    pub fn cell(&self, row: AgreementRow) -> &AgreementCell {
        self.cells.iter().find(|c| c.row == row).expect("every row is present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub alpha: f64,
    pub columns: Vec<AgreementColumn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AgreementTable {
    pub fn column(&self, reference: ToxicityClass) -> Option<&AgreementColumn> {
        self.columns.iter().find(|c| c.reference == reference)
    }

    pub fn to_text(&self) -> String {
        let mut headers = vec![String::new()];
        headers.extend(
            self.columns
                .iter()
                .map(|c| format!("{} (N={})", c.reference, c.n)),
        );
        let mut t = TextTable::new(headers);
        for row in AgreementRow::ALL {
            let mut line = vec![row.to_string()];
            line.extend(self.columns.iter().map(|c| c.cell(row).render()));
            t.push(line);
        }
        t.render()
    }
}

/// Rates of each four-way decision against a reference binary label, one
/// column per reference class. Classes with no reference item are omitted
/// and reported in `warnings`.
pub fn agreement_table(
    pairs: &[(FourWayDecision, ToxicityClass)],
    alpha: f64,
) -> Result<AgreementTable, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut columns = Vec::new();
    let mut warnings = Vec::new();
    for reference in [ToxicityClass::Toxic, ToxicityClass::NonToxic] {
        let decisions: Vec<FourWayDecision> = pairs
            .iter()
            .filter(|(_, r)| *r == reference)
            .map(|(d, _)| *d)
            .collect();
        if decisions.is_empty() {
            let msg = format!("no items with reference label {reference}; column omitted");
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let n = decisions.len() as u64;
        let mut cells = Vec::with_capacity(AgreementRow::ALL.len());
        for row in AgreementRow::ALL {
            let count = decisions.iter().filter(|d| row.matches(**d)).count() as u64;
            let sample = BinomialSample::with_alpha(count, n, alpha)?;
            cells.push(AgreementCell {
                row,
                count,
                rate: sample.proportion(),
                interval: wilson_interval(&sample),
            });
        }
        columns.push(AgreementColumn { reference, n, cells });
    }
    Ok(AgreementTable { alpha, columns, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use FourWayDecision::*;
    use ToxicityClass::*;

    fn expand(counts: [(FourWayDecision, usize); 4], reference: ToxicityClass) -> Vec<(FourWayDecision, ToxicityClass)> {
        counts
            .iter()
            .flat_map(|&(d, k)| std::iter::repeat_n((d, reference), k))
            .collect()
    }

    #[test]
    fn all_agree() {
        let mut pairs = expand([(Yes, 10), (MaybeYes, 0), (MaybeNo, 0), (No, 0)], Toxic);
        pairs.extend(expand([(Yes, 0), (MaybeYes, 0), (MaybeNo, 0), (No, 10)], NonToxic));
        let t = agreement_table(&pairs, 0.05).unwrap();
        assert_eq!(t.column(Toxic).unwrap().cell(AgreementRow::GroupedYes).rate, 1.0);
        assert_eq!(t.column(NonToxic).unwrap().cell(AgreementRow::GroupedNo).rate, 1.0);
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn empty_class_omitted_with_warning() {
        let pairs = expand([(Yes, 3), (MaybeYes, 1), (MaybeNo, 0), (No, 0)], Toxic);
        let t = agreement_table(&pairs, 0.05).unwrap();
        assert_eq!(t.columns.len(), 1);
        assert!(t.column(NonToxic).is_none());
        assert_eq!(t.warnings.len(), 1);
        assert_eq!(agreement_table(&[], 0.05), Err(StatsError::Empty));
    }

    #[test]
    fn rates_partition_and_grouped_is_sum() {
        let pairs = expand([(Yes, 5), (MaybeYes, 2), (MaybeNo, 7), (No, 1)], Toxic);
        let t = agreement_table(&pairs, 0.05).unwrap();
        let c = t.column(Toxic).unwrap();
        let r = |row| c.cell(row).rate;
        use AgreementRow as R;
        assert!((r(R::Yes) + r(R::MaybeYes) + r(R::MaybeNo) + r(R::No) - 1.0).abs() < 1e-12);
        assert!((r(R::GroupedYes) - r(R::Yes) - r(R::MaybeYes)).abs() < 1e-12);
        assert!((r(R::GroupedNo) - r(R::MaybeNo) - r(R::No)).abs() < 1e-12);
        assert!(t.to_text().contains("toxic (N=15)"));
    }
}
