mod common;

use std::collections::HashSet;
use std::sync::Arc;

use odrelease::par::map_indices;
use odrelease::privacy::{binomial_sample, complement_sample, privatize_with, threshold, PrivacyParams};
use odrelease::repair::{conditional_mutual_information, random_x_baseline};
use odrelease::rng::substream;
use odrelease::{Attribute, AttributeSchema, BucketKey, CountMode, Execution, Histogram, RepairSpec};
use proptest::prelude::*;

use common::*;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn single(counts: &[(u32, f64)], size: usize) -> Histogram {
    Histogram::from_counts(
        schema(&[size]),
        CountMode::Integer,
        counts.iter().map(|&(i, c)| (BucketKey::from(vec![i]), c)),
    )
    .unwrap()
}

#[test]
fn active_bucket_survival_matches_laplace_tail() {
    // counts around the threshold; survival is P(s + L >= tau) for L ~ Laplace(0, 1/eps)
    let counts: Vec<(u32, f64)> = [2.0, 6.0, 8.0, 10.0, 14.0].iter().enumerate().map(|(i, &c)| (i as u32, c)).collect();
    let h = single(&counts, 2000);
    let params = PrivacyParams::for_histogram(&h, 0.5, 0.9, None).unwrap();
    let runs = 4000;
    let released: Vec<Vec<bool>> = map_indices(Execution::Parallel, runs, |s| {
        let r = privatize_with(&h, &params, s as u64, Execution::Sequential).unwrap();
        counts.iter().map(|&(i, _)| r.histogram.contains(&BucketKey::from(vec![i]))).collect()
    });
    for (j, &(_, s)) in counts.iter().enumerate() {
        let d = params.epsilon * (s - params.tau);
        let want = if d >= 0.0 { 1.0 - 0.5 * (-d).exp() } else { 0.5 * d.exp() };
        let got = released.iter().filter(|r| r[j]).count() as f64 / runs as f64;
        let se = (want * (1.0 - want) / runs as f64).sqrt().max(1e-3);
        assert!((got - want).abs() < 4.0 * se, "count {s}: survival {got} vs {want}");
        assert!((params.retention_probability(s) - want).abs() < 1e-12);
    }
}

#[test]
fn spurious_bins_sit_an_exponential_above_threshold() {
    let h = Histogram::empty(schema(&[1000]), CountMode::Integer);
    let params = PrivacyParams::for_histogram(&h, 1.0, 0.5, None).unwrap();
    let values: Vec<f64> = map_indices(Execution::Parallel, 3000, |s| {
        privatize_with(&h, &params, s as u64, Execution::Sequential)
            .unwrap()
            .noisy
            .iter()
            .map(|(_, &v)| v)
            .collect::<Vec<_>>()
    })
    .concat();
    assert!(values.len() > 1000);
    assert!(values.iter().all(|&v| v >= params.tau));
    let (mean, se) = mean_se(&values);
    let want = params.tau + 1.0 / params.epsilon;
    assert!((mean - want).abs() < 4.0 * se, "mean {mean} vs {want}");
}

#[test]
fn empty_domain_release_is_usually_empty() {
    let h = Histogram::empty(schema(&[100]), CountMode::Integer);
    for rho in [0.5, 0.9, 0.99] {
        let params = PrivacyParams::for_histogram(&h, 1.0, rho, None).unwrap();
        let runs = 5000;
        let empty = map_indices(Execution::Parallel, runs, |s| {
            privatize_with(&h, &params, s as u64, Execution::Sequential).unwrap().histogram.is_empty()
        })
        .into_iter()
        .filter(|&e| e)
        .count() as f64
            / runs as f64;
        let se = (rho * (1.0 - rho) / runs as f64).sqrt();
        assert!((empty - rho).abs() < 4.0 * se + 1e-3, "rho {rho}: empty fraction {empty}");
    }
}

#[test]
fn complement_draws_are_uniform_and_distinct() {
    let schema = schema(&[4, 5]);
    let active: HashSet<BucketKey> = (0..10u64).map(|i| schema.key_from_index(i * 2)).collect();
    let mut rng = substream(5, "complement-test", 0);
    let draws = 100_000;
    let mut freq = std::collections::HashMap::new();
    for _ in 0..draws {
        let keys = complement_sample(&schema, &active, 1, &mut rng).unwrap();
        *freq.entry(keys[0].clone()).or_insert(0usize) += 1;
    }
    assert_eq!(freq.len(), 10);
    for (k, n) in freq {
        assert!(!active.contains(&k));
        let p = n as f64 / draws as f64;
        assert!((p - 0.1).abs() <= 0.01, "{k:?}: {p}");
    }
    for k in [3, 6, 10] {
        let keys = complement_sample(&schema, &active, k, &mut rng).unwrap();
        let set: HashSet<_> = keys.iter().cloned().collect();
        assert_eq!(set.len() as u64, k);
        assert!(set.is_disjoint(&active));
    }
    assert!(complement_sample(&schema, &active, 11, &mut rng).is_err());
}

#[test]
fn binomial_degenerate_cases() {
    let mut rng = substream(1, "binomial-test", 0);
    for n in [1, 17, 1_000_000] {
        assert_eq!(binomial_sample(n, 0.0, &mut rng).unwrap(), 0);
        assert_eq!(binomial_sample(n, 1.0, &mut rng).unwrap(), n);
    }
}

proptest! {
    #[test]
    fn threshold_monotone(n in 2u64..1_000_000, eps in 0.01f64..10.0, r1 in 0.5f64..0.999, r2 in 0.5f64..0.999) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assume!(hi - lo > 1e-6);
        let (a, b) = (threshold(n, lo, eps).unwrap(), threshold(n, hi, eps).unwrap());
        prop_assert!(a < b);
        prop_assert!(threshold(n, hi, eps * 2.0).unwrap() < b);
        // defining property: an inactive bucket crosses tau with probability 1 - rho^(1/n)
        let p = 0.5 * (-eps * b).exp();
        prop_assert!((p / -(hi.ln() / n as f64).exp_m1() - 1.0).abs() < 1e-6);
    }
}

/// Expected plug-in mutual information of the 2x2 table where four trips have
/// y = 0, four have y = 1, and every trip gets x = a or b with probability 1/2.
fn random_x_expected_mi() -> f64 {
    let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut total = 0.0;
    for (k0, w0) in binom.iter().enumerate() {
        for (k1, w1) in binom.iter().enumerate() {
            let t = [[k0 as f64, k1 as f64], [4.0 - k0 as f64, 4.0 - k1 as f64]];
            let mut mi = 0.0;
            for (row, x_sum) in t.iter().map(|r| (r, r[0] + r[1])) {
                for (c, y_sum) in row.iter().zip([4.0, 4.0]) {
                    if *c > 0.0 {
                        mi += c / 8.0 * (c * 8.0 / (x_sum * y_sum)).ln();
                    }
                }
            }
            total += w0 * w1 / 256.0 * mi;
        }
    }
    total
}

#[test]
fn random_x_baseline_matches_enumeration() {
    let schema = Arc::new(
        AttributeSchema::new(vec![Attribute::new("x", ["a", "b"]), Attribute::new("y", ["0", "1"])]).unwrap(),
    );
    let h = Histogram::from_labeled(
        schema,
        CountMode::Integer,
        &[(&["a", "0"][..], 3.0), (&["a", "1"], 1.0), (&["b", "0"], 1.0), (&["b", "1"], 3.0)],
    )
    .unwrap();
    let spec = RepairSpec::new("x", "y", []);
    let cmis: Vec<f64> = map_indices(Execution::Parallel, 10_000, |s| {
        let b = random_x_baseline(&h, &spec, s as u64).unwrap();
        assert_eq!(b.total(), 8.0);
        conditional_mutual_information(&b, &spec).unwrap()
    });
    let (mean, se) = mean_se(&cmis);
    let want = random_x_expected_mi();
    assert!((want - 0.08443).abs() < 1e-5, "oracle {want}");
    assert!((mean - want).abs() < 4.0 * se, "mean {mean} vs {want} (se {se})");
    assert!(mean < conditional_mutual_information(&h, &spec).unwrap());
}
