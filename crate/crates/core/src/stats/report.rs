use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::taxonomy::ToxicityClass;

/// Binary confusion counts with `toxic` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_pairs(preds: &[ToxicityClass], golds: &[ToxicityClass]) -> Self {
        let mut c = Confusion::default();
        for (p, g) in preds.iter().zip(golds) {
            match (p, g) {
                (ToxicityClass::Toxic, ToxicityClass::Toxic) => c.tp += 1,
                (ToxicityClass::Toxic, ToxicityClass::NonToxic) => c.fp += 1,
                (ToxicityClass::NonToxic, ToxicityClass::Toxic) => c.fn_ += 1,
                (ToxicityClass::NonToxic, ToxicityClass::NonToxic) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ToxicityClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the corresponding ratio was 0/0 and reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl ClassMetrics {
    fn from_counts(class: ToxicityClass, tp: u64, fp: u64, fn_: u64) -> Self {
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let (f1, f1_undefined) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        ClassMetrics {
            class,
            precision,
            recall,
            f1,
            support: tp + fn_,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub toxic: ClassMetrics,
    pub non_toxic: ClassMetrics,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n: u64,
    pub confusion: Confusion,
}

impl ClassReport {
    pub fn class(&self, c: ToxicityClass) -> &ClassMetrics {
        match c {
            ToxicityClass::Toxic => &self.toxic,
            ToxicityClass::NonToxic => &self.non_toxic,
        }
    }

    pub fn has_undefined(&self) -> bool {
        [&self.toxic, &self.non_toxic]
            .iter()
            .any(|m| m.precision_undefined || m.recall_undefined || m.f1_undefined)
    }
}

/// Per-class precision/recall/F1 plus accuracy for paired predictions and
/// reference labels.
pub fn classification_report(
    preds: &[ToxicityClass],
    golds: &[ToxicityClass],
) -> Result<ClassReport, StatsError> {
    if preds.len() != golds.len() {
        return Err(StatsError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() {
        return Err(StatsError::Empty);
    }
    let c = Confusion::from_pairs(preds, golds);
    let toxic = ClassMetrics::from_counts(ToxicityClass::Toxic, c.tp, c.fp, c.fn_);
    let non_toxic = ClassMetrics::from_counts(ToxicityClass::NonToxic, c.tn, c.fn_, c.fp);
    Ok(ClassReport {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        macro_f1: (toxic.f1 + non_toxic.f1) / 2.0,
        n: c.total(),
        toxic,
        non_toxic,
        confusion: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, SeedableRng};
    use ToxicityClass::*;

    fn fixture() -> (Vec<ToxicityClass>, Vec<ToxicityClass>) {
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for (p, g, k) in [(Toxic, Toxic, 3), (Toxic, NonToxic, 1), (NonToxic, Toxic, 1), (NonToxic, NonToxic, 5)] {
            for _ in 0..k {
                preds.push(p);
                golds.push(g);
            }
        }
        (preds, golds)
    }

    #[test]
    fn hand_computed_confusion() {
        let (p, g) = fixture();
        let r = classification_report(&p, &g).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 3, fp: 1, fn_: 1, tn: 5 });
        assert_eq!(r.toxic.precision, 0.75);
        assert_eq!(r.toxic.recall, 0.75);
        assert_eq!(r.toxic.f1, 0.75);
        assert_eq!(r.accuracy, 0.8);
        assert_eq!(r.non_toxic.precision, 5.0 / 6.0);
        assert_eq!(r.toxic.support, 4);
        assert!(!r.has_undefined());
    }

    #[test]
    fn perfect() {
        let g = vec![Toxic, NonToxic, NonToxic, Toxic];
        let r = classification_report(&g, &g).unwrap();
        for m in [r.toxic, r.non_toxic] {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn degenerate_predictions_are_flagged() {
        let g = vec![Toxic, NonToxic, NonToxic, Toxic];
        let r = classification_report(&[Toxic; 4], &g).unwrap();
        assert!(r.non_toxic.precision_undefined);
        assert_eq!(r.non_toxic.precision, 0.0);
        assert!(!r.toxic.precision_undefined);
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(
            classification_report(&[Toxic], &[Toxic, NonToxic]),
            Err(StatsError::LengthMismatch { preds: 1, golds: 2 })
        );
        assert_eq!(classification_report(&[], &[]), Err(StatsError::Empty));
    }

    fn class() -> impl Strategy<Value = ToxicityClass> {
        prop_oneof![Just(Toxic), Just(NonToxic)]
    }

    proptest! {
        #[test]
        fn joint_shuffle_invariant(pairs in prop::collection::vec((class(), class()), 1..200), seed: u64) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let base = classification_report(&p, &g).unwrap();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p2, g2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            prop_assert_eq!(classification_report(&p2, &g2).unwrap(), base);
        }

        #[test]
        fn accuracy_and_f1_identities(pairs in prop::collection::vec((class(), class()), 1..200)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let r = classification_report(&p, &g).unwrap();
            let c = r.confusion;
            prop_assert_eq!(r.accuracy, (c.tp + c.tn) as f64 / p.len() as f64);
            for m in [r.toxic, r.non_toxic] {
                prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
                if !m.precision_undefined && !m.recall_undefined && !m.f1_undefined {
                    let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
                    prop_assert!((m.f1 - h).abs() < 1e-12);
                }
            }
        }
    }
}
