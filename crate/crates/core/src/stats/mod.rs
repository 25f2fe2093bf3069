//! Binomial confidence intervals, agreement tables and classification metrics.

mod agreement;
mod format;
mod normal;
mod report;

pub use agreement::{agreement_table, AgreementCell, AgreementColumn, AgreementRow, AgreementTable};
pub use format::{format_percent, format_ratio, strip_leading_zero, TextTable};
pub use normal::{kappa, normal_quantile};
pub use report::{classification_report, ClassMetrics, ClassReport, Confusion};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("invalid binomial sample: {successes} successes out of {trials} trials")]
    InvalidSample { successes: u64, trials: u64 },
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    #[error("predictions and references differ in length ({preds} vs {golds})")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no observations")]
    Empty,
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// `successes` out of `trials` i.i.d. Bernoulli draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialSample {
    successes: u64,
    trials: u64,
    alpha: f64,
}

impl BinomialSample {
    pub fn new(successes: u64, trials: u64) -> Result<Self, StatsError> {
        Self::with_alpha(successes, trials, DEFAULT_ALPHA)
    }

    pub fn with_alpha(successes: u64, trials: u64, alpha: f64) -> Result<Self, StatsError> {
        if trials == 0 || successes > trials {
            return Err(StatsError::InvalidSample { successes, trials });
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(StatsError::InvalidAlpha(alpha));
        }
        Ok(BinomialSample { successes, trials, alpha })
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn proportion(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Normal-approximation interval p̂ ± κ·sqrt(p̂q̂/n). Not clamped, so it can
/// leave [0, 1] for small samples.
pub fn wald_interval(s: &BinomialSample) -> Interval {
    let p = s.proportion();
    let half = s.kappa() * (p * (1.0 - p) / s.trials as f64).sqrt();
    Interval { lo: p - half, hi: p + half }
}

/// Wilson score interval. Endpoints are clamped to [0, 1] to absorb rounding
/// at x = 0 and x = n.
pub fn wilson_interval(s: &BinomialSample) -> Interval {
    let n = s.trials as f64;
    let p = s.proportion();
    let k = s.kappa();
    let k2 = k * k;
    let center = (n * p + k2 / 2.0) / (n + k2);
    let half = (k * n.sqrt() / (n + k2)) * (p * (1.0 - p) + k2 / (4.0 * n)).sqrt();
    let (mut lo, mut hi) = ((center - half).clamp(0.0, 1.0), (center + half).clamp(0.0, 1.0));
    if s.successes == 0 {
        lo = 0.0;
    }
    if s.successes == s.trials {
        hi = 1.0;
    }
    Interval { lo, hi }
}
