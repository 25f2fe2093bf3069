//! The reasoning/answer weighted loss and its per-token weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spans::SpanSegmentation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("empty answer span")]
    EmptyAnswer,
    #[error("per-token losses cover {have} tokens, spans need index {need}")]
    ShortLosses { have: usize, need: usize },
    #[error("negative or non-finite weight ({0}, {1})")]
    BadWeights(f64, f64),
}

/// How per-token losses of one sequence are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LossWeights {
    /// λ_r · mean(r) + λ_y · mean(y).
    Dynamic { lambda_r: f64, lambda_y: f64 },
    /// Uniform mean over all supervised tokens (r ∪ y).
    Standard,
}

impl LossWeights {
    /// λ proportional to the span token counts, which reproduces the
    /// standard loss.
    pub fn count_weighted(seg: &SpanSegmentation) -> Self {
        let n = (seg.n_r() + seg.n_y()) as f64;
        LossWeights::Dynamic { lambda_r: seg.n_r() as f64 / n, lambda_y: seg.n_y() as f64 / n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceLoss {
    pub total: f64,
    /// Mean loss over r; `None` when r is empty.
    pub l_r: Option<f64>,
    pub l_y: f64,
}

fn check(losses: &[f64], seg: &SpanSegmentation) -> Result<(), LossError> {
    if seg.y.is_empty() {
        return Err(LossError::EmptyAnswer);
    }
    let need = seg.r.iter().map(|r| r.end).chain([seg.y.end]).max().unwrap_or(0);
    if losses.len() < need {
        return Err(LossError::ShortLosses { have: losses.len(), need });
    }
    Ok(())
}

/// Span means and their combination for one sequence.
pub fn weighted_loss(losses: &[f64], seg: &SpanSegmentation, weights: LossWeights) -> Result<SequenceLoss, LossError> {
    check(losses, seg)?;
    let sum_r: f64 = seg.r_indices().map(|i| losses[i]).sum();
    let sum_y: f64 = seg.y.clone().map(|i| losses[i]).sum();
    let (n_r, n_y) = (seg.n_r(), seg.n_y());
    let l_r = (n_r > 0).then(|| sum_r / n_r as f64);
    let l_y = sum_y / n_y as f64;
    let total = match weights {
        LossWeights::Dynamic { lambda_r, lambda_y } => {
            if !(lambda_r >= 0.0 && lambda_y >= 0.0 && lambda_r.is_finite() && lambda_y.is_finite()) {
                return Err(LossError::BadWeights(lambda_r, lambda_y));
            }
            lambda_r * l_r.unwrap_or(0.0) + lambda_y * l_y
        }
        LossWeights::Standard => (sum_r + sum_y) / (n_r + n_y) as f64,
    };
    Ok(SequenceLoss { total, l_r, l_y })
}

/// ∂L/∂loss_t for every token of a sequence of length `len`: λ_r/n_r on r,
/// λ_y/n_y on y, zero elsewhere (prompt). Summing `weights[t] * losses[t]`
/// gives exactly [`weighted_loss`]'s total.
pub fn token_weights(len: usize, seg: &SpanSegmentation, weights: LossWeights) -> Result<Vec<f64>, LossError> {
    let mut w = vec![0.0; len];
    check(&w, seg)?;
    let (n_r, n_y) = (seg.n_r(), seg.n_y());
    let (wr, wy) = match weights {
        LossWeights::Dynamic { lambda_r, lambda_y } => {
            if !(lambda_r >= 0.0 && lambda_y >= 0.0 && lambda_r.is_finite() && lambda_y.is_finite()) {
                return Err(LossError::BadWeights(lambda_r, lambda_y));
            }
            (if n_r > 0 { lambda_r / n_r as f64 } else { 0.0 }, lambda_y / n_y as f64)
        }
        LossWeights::Standard => {
            let u = 1.0 / (n_r + n_y) as f64;
            (u, u)
        }
    };
    for i in seg.r_indices() {
        w[i] = wr;
    }
    for i in seg.y.clone() {
        w[i] = wy;
    }
    Ok(w)
}
