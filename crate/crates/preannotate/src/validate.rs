use serde::{Deserialize, Serialize};
use toxi_core::cot::{auto_label, CotAnnotation};
use toxi_core::stats::{wilson_interval, BinomialSample, Interval, StatsError};
use toxi_core::ToxicityClass;

/// A pre-annotated comment that a human also labeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSample {
    pub id: String,
    pub score: u8,
    pub decision: ToxicityClass,
    pub human: ToxicityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleValidation {
    pub sample_size: usize,
    pub auto_labeled: u64,
    /// Auto-labeled comments the human also judged non-toxic.
    pub agreeing: u64,
    pub agreement: f64,
    pub interval: Interval,
    pub alpha: f64,
    /// Auto-labeled ids the human judged toxic.
    pub misses: Vec<String>,
}

/// Agreement between the auto-label rule and human labels on the comments
/// the rule would have auto-labeled, with a Wilson interval.
pub fn validate_rule(samples: &[RuleSample], alpha: f64) -> Result<RuleValidation, StatsError> {
    let auto: Vec<&RuleSample> = samples
        .iter()
        .filter(|s| auto_label(&CotAnnotation::verdict(s.score, s.decision)).is_auto())
        .collect();
    let misses: Vec<String> = auto
        .iter()
        .filter(|s| s.human == ToxicityClass::Toxic)
        .map(|s| s.id.clone())
        .collect();
    let n = auto.len() as u64;
    let agreeing = n - misses.len() as u64;
    if n == 0 {
        return Err(StatsError::Empty);
    }
    let sample = BinomialSample::with_alpha(agreeing, n, alpha)?;
    Ok(RuleValidation {
        sample_size: samples.len(),
        auto_labeled: n,
        agreeing,
        agreement: sample.proportion(),
        interval: wilson_interval(&sample),
        alpha,
        misses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ToxicityClass::*;

    fn s(id: &str, score: u8, decision: ToxicityClass, human: ToxicityClass) -> RuleSample {
        RuleSample { id: id.into(), score, decision, human }
    }

    #[test]
    fn perfect_agreement_on_auto_subset() {
        let mut samples: Vec<RuleSample> =
            (0..422).map(|i| s(&format!("c{i}"), (i % 4) as u8, NonToxic, NonToxic)).collect();
        // Routed to humans, so irrelevant to the rule's agreement.
        samples.push(s("q", 8, Toxic, Toxic));
        let v = validate_rule(&samples, 0.05).unwrap();
        assert_eq!(v.auto_labeled, 422);
        assert_eq!(v.agreement, 1.0);
        assert_eq!(v.interval.hi, 1.0);
        assert!(v.interval.lo > 0.99);
        assert!(v.misses.is_empty());
    }

    #[test]
    fn misses_are_listed() {
        let samples = vec![s("a", 2, Toxic, Toxic), s("b", 9, NonToxic, NonToxic), s("c", 7, Toxic, Toxic)];
        let v = validate_rule(&samples, 0.05).unwrap();
        assert_eq!(v.auto_labeled, 2);
        assert_eq!(v.agreeing, 1);
        assert_eq!(v.misses, vec!["a".to_string()]);
    }

    #[test]
    fn no_auto_labeled_comment_is_an_error() {
        assert_eq!(validate_rule(&[s("a", 9, Toxic, Toxic)], 0.05), Err(StatsError::Empty));
    }
}
