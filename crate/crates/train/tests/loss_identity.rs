#![allow(clippy::single_range_in_vec_init)]

//! Numerical checks of the weighted loss against independent oracles.

use std::ops::Range;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toxi_train::*;

/// Random segmentation of a length-`n` sequence: prompt, alternating r and
/// scaffold runs, then a y run.
fn random_segmentation(rng: &mut ChaCha8Rng, n: usize) -> SpanSegmentation {
    let prompt = rng.gen_range(0..n / 3);
    let y_len = rng.gen_range(1..=3.min(n - prompt));
    let y = n - y_len..n;
    let mut r = Vec::new();
    let mut scaffold = Vec::new();
    let mut at = prompt;
    let mut inside = rng.gen_bool(0.5);
    while at < y.start {
        let len = rng.gen_range(1..=(y.start - at).min(8));
        let range: Range<usize> = at..at + len;
        if inside { r.push(range) } else { scaffold.push(range) }
        inside = !inside;
        at += len;
    }
    SpanSegmentation { r, y, scaffold }
}

/// Plain mean over an explicit index set.
fn mean_over(losses: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| losses[i]).sum::<f64>() / idx.len() as f64
}

fn indices(seg: &SpanSegmentation) -> (Vec<usize>, Vec<usize>) {
    let r: Vec<usize> = seg.r.iter().flat_map(|r| r.clone()).collect();
    (r, seg.y.clone().collect())
}

#[test]
fn count_weighted_lambda_equals_full_span_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(4..200);
        let seg = random_segmentation(&mut rng, n);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..12.0)).collect();
        let (r, y) = indices(&seg);
        let all: Vec<usize> = r.iter().chain(&y).copied().collect();
        let oracle = mean_over(&losses, &all);
        let got = weighted_loss(&losses, &seg, LossWeights::count_weighted(&seg)).unwrap().total;
        let standard = weighted_loss(&losses, &seg, LossWeights::Standard).unwrap().total;
        worst = worst.max((got - oracle).abs()).max((standard - oracle).abs());
    }
    assert!(worst < 1e-9, "max deviation {worst}");
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.gen_range(4..60);
        let seg = random_segmentation(&mut rng, n);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..8.0)).collect();
        let (lr, ly) = (rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0));
        let w = LossWeights::Dynamic { lambda_r: lr, lambda_y: ly };
        let (r, y) = indices(&seg);
        let analytic = token_weights(n, &seg, w).unwrap();
        let h = 1e-5;
        for t in 0..n {
            let mut up = losses.clone();
            up[t] += h;
            let mut down = losses.clone();
            down[t] -= h;
            let fd = (weighted_loss(&up, &seg, w).unwrap().total - weighted_loss(&down, &seg, w).unwrap().total) / (2.0 * h);
            let expected = if r.contains(&t) {
                lr / r.len() as f64
            } else if y.contains(&t) {
                ly / y.len() as f64
            } else {
                0.0
            };
            assert!((fd - expected).abs() < 1e-6, "t={t}: fd {fd} vs {expected}");
            assert!((analytic[t] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn scaffold_folding_keeps_every_completion_token() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(4..100);
        let seg = random_segmentation(&mut rng, n);
        let full = seg.with_scaffold_in_r();
        assert_eq!(full.n_r(), seg.n_r() + seg.scaffold.iter().map(|r| r.len()).sum::<usize>());
        assert!(full.r.windows(2).all(|w| w[0].end < w[1].start));
        assert_eq!(full.y, seg.y);
    }
}

proptest! {
    #[test]
    fn doubling_lambda_doubles_loss(
        losses in proptest::collection::vec(0.0f64..10.0, 10),
        lr in 0.0f64..5.0,
        ly in 0.0f64..5.0,
    ) {
        let seg = SpanSegmentation { r: vec![1..4, 5..8], y: 8..10, scaffold: vec![4..5] };
        let one = weighted_loss(&losses, &seg, LossWeights::Dynamic { lambda_r: lr, lambda_y: ly }).unwrap();
        let two = weighted_loss(&losses, &seg, LossWeights::Dynamic { lambda_r: 2.0 * lr, lambda_y: 2.0 * ly }).unwrap();
        prop_assert!((two.total - 2.0 * one.total).abs() <= 1e-9 * (1.0 + one.total));
        let projection = weighted_loss(&losses, &seg, LossWeights::Dynamic { lambda_r: 1.0, lambda_y: 0.0 }).unwrap();
        prop_assert!((projection.total - mean_over(&losses, &[1, 2, 3, 5, 6, 7])).abs() < 1e-12);
    }

    #[test]
    fn spans_are_disjoint_and_exclude_the_prompt(
        blocks in proptest::collection::vec(0usize..5, 1..4),
        prompt_len in 0usize..4,
        trailing in 0usize..3,
    ) {
        let mut tokens: Vec<String> = (0..prompt_len).map(|i| format!("p{i}")).collect();
        for (b, len) in blocks.iter().enumerate() {
            tokens.push("<think>".into());
            tokens.extend((0..*len).map(|i| format!("w{b}{i}")));
            tokens.push("</think>".into());
        }
        tokens.push("?".into());
        tokens.push("oui".into());
        tokens.extend((0..trailing).map(|_| "<eos>".to_string()));
        let seg = segment_spans(&tokens, prompt_len, &ThinkMarkers::default()).unwrap();
        let r: Vec<usize> = seg.r_indices().collect();
        prop_assert_eq!(r.len(), blocks.iter().sum::<usize>());
        prop_assert!(r.iter().all(|&i| i >= prompt_len && tokens[i].starts_with('w')));
        prop_assert_eq!(seg.y.len(), 1);
        prop_assert_eq!(tokens[seg.y.start].as_str(), "oui");
        prop_assert!(!r.contains(&seg.y.start));
        let covered = seg.n_r() + seg.n_y() + seg.scaffold.iter().map(|s| s.len()).sum::<usize>();
        prop_assert_eq!(covered, tokens.len() - prompt_len);
    }
}
