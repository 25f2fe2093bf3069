use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("lambda ratio must be positive and finite, got {0}")]
    Ratio(f64),
    #[error("epochs are numbered from 1")]
    Epoch,
    #[error("initial lambdas must be non-negative, got ({0}, {1})")]
    Initial(f64, f64),
}

/// (λ_r, λ_y) at `epoch` (1-based): λ_r shrinks and λ_y grows by `ratio`
/// each epoch.
pub fn lambda_schedule(epoch: u32, initial: (f64, f64), ratio: f64) -> Result<(f64, f64), ScheduleError> {
    if epoch == 0 {
        return Err(ScheduleError::Epoch);
    }
    lambda_at(f64::from(epoch - 1), initial, ratio)
}

/// Same progression at a fractional number of completed epochs, used when
/// weights move within an epoch.
pub fn lambda_at(progress: f64, initial: (f64, f64), ratio: f64) -> Result<(f64, f64), ScheduleError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(ScheduleError::Ratio(ratio));
    }
    if !(initial.0 >= 0.0 && initial.1 >= 0.0) {
        return Err(ScheduleError::Initial(initial.0, initial.1));
    }
    let f = ratio.powf(progress);
    Ok((initial.0 / f, initial.1 * f))
}

/// One logged schedule point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub epoch: u32,
    pub lambda_r: f64,
    pub lambda_y: f64,
}

pub fn lambda_trace(epochs: u32, initial: (f64, f64), ratio: f64) -> Result<Vec<LambdaPoint>, ScheduleError> {
    (1..=epochs)
        .map(|e| {
            let (lambda_r, lambda_y) = lambda_schedule(e, initial, ratio)?;
            Ok(LambdaPoint { epoch: e, lambda_r, lambda_y })
        })
        .collect()
}

/// Cosine decay from `base` to 0 over `total` steps after a linear warmup.
pub fn cosine_lr(step: usize, total: usize, warmup: usize, base: f64) -> f64 {
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let t = ((step - warmup) as f64 / span as f64).min(1.0);
    0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
}
