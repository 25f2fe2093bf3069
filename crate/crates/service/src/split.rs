use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toxi_core::ToxicityClass;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("need {needed} {class} items for the bench set, only {available} available")]
    Insufficient {
        class: ToxicityClass,
        needed: usize,
        available: usize,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub bench_per_class: usize,
    /// Sorted ids.
    pub train: Vec<String>,
    /// Sorted ids.
    pub bench: Vec<String>,
    pub train_toxic_fraction: f64,
    /// (toxic, non_toxic) counts in the bench set.
    pub bench_counts: (usize, usize),
}

/// Draws `bench_per_class` items of each class uniformly at random (seeded)
/// into the bench set; everything else is train. The result depends only on
/// the set of (id, label) pairs and the seed, not on input order.
pub fn split_dataset(
    items: &[(String, ToxicityClass)],
    bench_per_class: usize,
    seed: u64,
) -> Result<SplitManifest, SplitError> {
    let mut sorted: Vec<&(String, ToxicityClass)> = items.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(SplitError::DuplicateId(w[0].0.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut bench = Vec::new();
    let mut train_toxic = 0usize;
    for class in [ToxicityClass::Toxic, ToxicityClass::NonToxic] {
        let mut ids: Vec<&String> = sorted.iter().filter(|(_, c)| *c == class).map(|(id, _)| id).collect();
        if ids.len() < bench_per_class {
            return Err(SplitError::Insufficient { class, needed: bench_per_class, available: ids.len() });
        }
        ids.shuffle(&mut rng);
        bench.extend(ids[..bench_per_class].iter().map(|s| s.to_string()));
        let rest = &ids[bench_per_class..];
        if class == ToxicityClass::Toxic {
            train_toxic = rest.len();
        }
        train.extend(rest.iter().map(|s| s.to_string()));
    }
    train.sort();
    bench.sort();
    let train_toxic_fraction = if train.is_empty() { 0.0 } else { train_toxic as f64 / train.len() as f64 };
    Ok(SplitManifest {
        seed,
        bench_per_class,
        train,
        bench,
        train_toxic_fraction,
        bench_counts: (bench_per_class, bench_per_class),
    })
}
