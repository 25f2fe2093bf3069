//! Interval and agreement-table checks against independent references.

use toxi_core::stats::{
    agreement_table, normal_quantile, wald_interval, wilson_interval, AgreementRow, BinomialSample,
};
use toxi_core::{FourWayDecision, ToxicityClass};

/// Φ(z) by composite Simpson quadrature of the normal density.
fn cdf_by_quadrature(z: f64) -> f64 {
    let steps = 20_000;
    let h = z / steps as f64;
    let pdf = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = pdf(0.0) + pdf(z);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * pdf(i as f64 * h);
    }
    0.5 + sum * h / 3.0
}

/// Quantile by bisection on the quadrature CDF.
fn quantile_by_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if cdf_by_quadrature(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

#[test]
fn quantile_agrees_with_quadrature_oracle() {
    for p in [0.6, 0.8, 0.9, 0.95, 0.975, 0.99, 0.995, 0.999] {
        let oracle = quantile_by_bisection(p);
        assert!((normal_quantile(p) - oracle).abs() < 1e-9, "p={p}");
    }
}

#[test]
fn wald_246_of_250_matches_oracle() {
    let s = BinomialSample::new(246, 250).unwrap();
    let k = quantile_by_bisection(0.975);
    let p: f64 = 246.0 / 250.0;
    let half = k * (p * (1.0 - p) / 250.0).sqrt();
    let got = wald_interval(&s);
    assert!((got.lo - (p - half)).abs() < 1e-9);
    assert!((got.hi - (p + half)).abs() < 1e-9);
}

#[test]
fn wilson_matches_oracle_formula() {
    let k = quantile_by_bisection(0.975);
    for (x, n) in [(0u64, 250u64), (246, 250), (1, 10), (7, 250), (14, 250)] {
        let (nf, p) = (n as f64, x as f64 / n as f64);
        let c = (nf * p + k * k / 2.0) / (nf + k * k);
        let h = k * nf.sqrt() / (nf + k * k) * (p * (1.0 - p) + k * k / (4.0 * nf)).sqrt();
        let got = wilson_interval(&BinomialSample::new(x, n).unwrap());
        assert!((got.lo - (c - h).max(0.0)).abs() < 1e-9);
        assert!((got.hi - (c + h).min(1.0)).abs() < 1e-9);
    }
}

/// Counts reconstructed from the published intra-annotator percentages at
/// N=250 per column; rendering must reproduce every printed cell.
#[test]
fn intra_annotator_table_reproduces_published_cells() {
    use FourWayDecision::*;
    let mut pairs = Vec::new();
    for (d, k) in [(Yes, 227), (MaybeYes, 19), (MaybeNo, 4), (No, 0)] {
        pairs.extend(std::iter::repeat_n((d, ToxicityClass::Toxic), k));
    }
    for (d, k) in [(Yes, 1), (MaybeYes, 6), (MaybeNo, 14), (No, 229)] {
        pairs.extend(std::iter::repeat_n((d, ToxicityClass::NonToxic), k));
    }
    let table = agreement_table(&pairs, 0.05).unwrap();
    let expected = [
        (AgreementRow::GroupedYes, "98% [96.0, 99.4%]", "2.8% [1.4, 5.7%]"),
        (AgreementRow::Yes, "91% [86.6, 93.8%]", "0.4% [0.1, 2.2%]"),
        (AgreementRow::MaybeYes, "7.6% [4.9, 11.6%]", "2.4% [1.1, 5.1%]"),
        (AgreementRow::GroupedNo, "1.6% [0.6, 4.0%]", "97% [94.3, 98.6%]"),
        (AgreementRow::MaybeNo, "1.6% [0.6, 4.0%]", "5.6% [3.4, 9.2%]"),
        (AgreementRow::No, "0.0% [0.0, 1.5%]", "92% [87.5, 94.4%]"),
    ];
    let toxic = table.column(ToxicityClass::Toxic).unwrap();
    let non_toxic = table.column(ToxicityClass::NonToxic).unwrap();
    for (row, t, nt) in expected {
        assert_eq!(toxic.cell(row).render(), t, "{row:?} toxic");
        assert_eq!(non_toxic.cell(row).render(), nt, "{row:?} non-toxic");
    }
}
