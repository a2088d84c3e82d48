//! Differentially private release of a categorical histogram whose global
//! domain is much larger than its active domain.
//!
//! The mechanism:
//!
//! 1. adds Laplace noise of scale `1/epsilon` to every active count and
//!    drops noisy counts below the threshold `tau`;
//! 2. draws the number of out-of-domain bins `k ~ Binomial(n, e^{-epsilon tau} / 2)`,
//!    where `n` is the number of inactive buckets in the global domain;
//! 3. adds `k` inactive buckets chosen uniformly, each with count
//!    `tau + Exponential(mean 1/epsilon)`.
//!
//! `tau` is chosen so that with probability `rho` no inactive bucket is
//! released: `(1 - e^{-epsilon tau} / 2)^n = rho`.

mod complement;
mod sampling;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use complement::complement_sample;
pub use sampling::{binomial_sample, exponential_sample, laplace_sample};

use crate::error::{Error, Result};
use crate::histogram::{CountMode, Histogram};
use crate::par::{try_map_indices, Execution};
use crate::rng::substream;
use crate::schema::BucketKey;

/// Release threshold `tau = -ln(2 (1 - rho^(1/n))) / epsilon`.
///
/// `1 - rho^(1/n)` is evaluated as `-expm1(ln(rho) / n)` so it stays
/// accurate for very large `n`. A negative threshold is rejected: it only
/// arises when `rho^(1/n) < 1/2`, where the binomial tail formula no longer
/// applies.
pub fn threshold(n: u64, rho: f64, epsilon: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("threshold needs n >= 1"));
    }
    check_epsilon_rho(epsilon, rho)?;
    let miss = -(rho.ln() / n as f64).exp_m1();
    let tau = -(2.0 * miss).ln() / epsilon;
    if tau < 0.0 {
        return Err(Error::param(format!(
            "rho={rho} with n={n} gives a negative threshold ({tau:.6})"
        )));
    }
    // turns -0.0 into 0.0
    Ok(tau + 0.0)
}

fn check_epsilon_rho(epsilon: f64, rho: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub rho: f64,
    /// Number of buckets in the global domain outside the active domain.
    pub n: u64,
    pub tau: f64,
}

impl PrivacyParams {
    /// With `n = 0` there is nothing to leak from outside the active domain
    /// and `tau` is 0.
    pub fn new(epsilon: f64, rho: f64, n: u64) -> Result<Self> {
        check_epsilon_rho(epsilon, rho)?;
        let tau = if n == 0 { 0.0 } else { threshold(n, rho, epsilon)? };
        Ok(PrivacyParams { epsilon, rho, n, tau })
    }

    /// Parameters for `h`, with `n` = global size minus active size unless
    /// overridden.
    pub fn for_histogram(h: &Histogram, epsilon: f64, rho: f64, n_override: Option<u64>) -> Result<Self> {
        let n = n_override.unwrap_or_else(|| h.schema().global_size() - h.len() as u64);
        Self::new(epsilon, rho, n)
    }

    /// Probability that a single inactive bucket is released.
    pub fn spurious_probability(&self) -> f64 {
        0.5 * (-self.epsilon * self.tau).exp()
    }

    /// Probability that an active bucket with true count `s` survives.
    pub fn retention_probability(&self, s: f64) -> f64 {
        let d = self.epsilon * (s - self.tau);
        if d >= 0.0 {
            1.0 - 0.5 * (-d).exp()
        } else {
            0.5 * d.exp()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReleaseResult {
    /// Emitted histogram: integer counts, each at least `max(1, ceil(tau))`.
    pub histogram: Histogram,
    /// The same release before integerization.
    pub noisy: Histogram,
    pub retained_active: usize,
    pub suppressed_active: usize,
    /// Number of inactive buckets added (the binomial draw).
    pub spurious_added: u64,
    pub seed: u64,
    pub params: PrivacyParams,
}

/// Scalar summary written as the release report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseReport {
    pub retained_active: usize,
    pub suppressed_active: usize,
    pub spurious_added: u64,
    pub released_buckets: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub rho: f64,
    pub n: u64,
    pub tau: f64,
}

impl ReleaseResult {
    pub fn report(&self) -> ReleaseReport {
        ReleaseReport {
            retained_active: self.retained_active,
            suppressed_active: self.suppressed_active,
            spurious_added: self.spurious_added,
            released_buckets: self.histogram.len(),
            seed: self.seed,
            epsilon: self.params.epsilon,
            rho: self.params.rho,
            n: self.params.n,
            tau: self.params.tau,
        }
    }
}

pub fn privatize(h: &Histogram, params: &PrivacyParams, seed: u64) -> Result<ReleaseResult> {
    privatize_with(h, params, seed, Execution::default())
}

/// Runs the release mechanism. Deterministic in `seed`: bucket `i` (in key
/// order) draws its noise from its own substream.
pub fn privatize_with(h: &Histogram, params: &PrivacyParams, seed: u64, exec: Execution) -> Result<ReleaseResult> {
    if h.mode() != CountMode::Integer {
        return Err(Error::param("privatize expects integer counts"));
    }
    let PrivacyParams { epsilon, tau, n, .. } = *params;
    let scale = 1.0 / epsilon;
    let active: Vec<(&BucketKey, f64)> = h.iter().map(|(k, &c)| (k, c)).collect();

    let noised = try_map_indices(exec, active.len(), |i| {
        let mut rng = substream(seed, "laplace", i as u64);
        laplace_sample(active[i].1, scale, &mut rng)
    })?;
    let mut released: Vec<(BucketKey, f64)> = active
        .iter()
        .zip(&noised)
        .filter(|(_, &v)| v >= tau && v > 0.0)
        .map(|((k, _), &v)| ((*k).clone(), v))
        .collect();
    let retained_active = released.len();

    let spurious_added = if n == 0 {
        0
    } else {
        binomial_sample(n, params.spurious_probability(), &mut substream(seed, "binomial", 0))?
    };
    let active_set: HashSet<BucketKey> = h.keys().cloned().collect();
    let spurious_keys = complement_sample(h.schema(), &active_set, spurious_added, &mut substream(seed, "complement", 0))?;
    for (j, key) in spurious_keys.into_iter().enumerate() {
        let extra = exponential_sample(scale, &mut substream(seed, "spurious", j as u64))?;
        released.push((key, tau + extra));
    }

    let schema = h.schema_arc().clone();
    let floor = tau.ceil().max(1.0);
    let emitted: Vec<(BucketKey, f64)> = released
        .iter()
        .map(|(k, v)| (k.clone(), v.round_ties_even().max(floor)))
        .collect();
    Ok(ReleaseResult {
        histogram: Histogram::from_counts(schema.clone(), CountMode::Integer, emitted)?,
        noisy: Histogram::from_counts(schema, CountMode::Fractional, released)?,
        retained_active,
        suppressed_active: active.len() - retained_active,
        spurious_added,
        seed,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Attribute, AttributeSchema};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn schema(size: usize) -> Arc<AttributeSchema> {
        Arc::new(AttributeSchema::new(vec![Attribute::new("k", (0..size).map(|i| format!("b{i:04}")))]).unwrap())
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold(1, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(threshold(1, 0.5, 7.5).unwrap(), 0.0);
        // independent evaluation: 1 - 0.9^(1e-6) via its series ln(1/0.9)/1e6 (1 - x/2)
        let x = -(0.9f64.ln()) / 1e6;
        let miss = x * (1.0 - x / 2.0);
        let oracle = -(2.0 * miss).ln();
        assert_abs_diff_eq!(threshold(1_000_000, 0.9, 1.0).unwrap(), oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(threshold(1_000_000, 0.9, 1.0).unwrap(), 15.373, epsilon = 1e-3);
    }

    #[test]
    fn threshold_errors() {
        assert!(threshold(1, 0.4, 1.0).is_err(), "negative tau");
        assert!(threshold(10, 0.0, 1.0).is_err());
        assert!(threshold(10, 1.0, 1.0).is_err());
        assert!(threshold(10, 0.5, 0.0).is_err());
        assert!(threshold(0, 0.5, 1.0).is_err());
    }

    #[test]
    fn threshold_increases_with_rho() {
        let taus: Vec<f64> = [0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999]
            .iter()
            .map(|&rho| threshold(5000, rho, 0.5).unwrap())
            .collect();
        assert!(taus.windows(2).all(|w| w[0] < w[1]), "{taus:?}");
    }

    #[test]
    fn retention_formula_is_continuous_at_tau() {
        let p = PrivacyParams::new(1.0, 0.9, 1000).unwrap();
        assert_abs_diff_eq!(p.retention_probability(p.tau), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.retention_probability(p.tau + 1e-12), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn vanishing_noise_keeps_true_counts() {
        let s = schema(50);
        let h = Histogram::from_counts(s.clone(), CountMode::Integer, (0..10).map(|i| (s.key_from_index(i), (i + 3) as f64))).unwrap();
        let params = PrivacyParams::for_histogram(&h, 1e6, 0.9, None).unwrap();
        assert!(params.tau < 1e-4);
        let r = privatize(&h, &params, 11).unwrap();
        assert_eq!(r.retained_active, 10);
        for (k, &c) in h.iter() {
            assert!((r.histogram.get(k) - c).abs() <= 1.0);
        }
    }

    #[test]
    fn release_invariants() {
        let s = schema(400);
        let h = Histogram::from_counts(s.clone(), CountMode::Integer, (0..40).map(|i| (s.key_from_index(i * 7), (i % 9 + 1) as f64))).unwrap();
        let params = PrivacyParams::for_histogram(&h, 0.5, 0.5, None).unwrap();
        assert_eq!(params.n, 360);
        for seed in 0..50 {
            let r = privatize(&h, &params, seed).unwrap();
            assert_eq!(r.retained_active + r.suppressed_active, h.len());
            assert_eq!(r.histogram.len(), r.retained_active + r.spurious_added as usize);
            assert!(r.noisy.iter().all(|(_, &v)| v >= params.tau));
            assert!(r.histogram.iter().all(|(_, &v)| v >= params.tau.ceil().max(1.0)));
            let spurious = r.histogram.keys().filter(|k| !h.contains(k)).count();
            assert_eq!(spurious as u64, r.spurious_added);
        }
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let s = schema(100);
        let h = Histogram::from_counts(s.clone(), CountMode::Integer, (0..30).map(|i| (s.key_from_index(i), 20.0))).unwrap();
        let params = PrivacyParams::for_histogram(&h, 1.0, 0.8, None).unwrap();
        let a = privatize_with(&h, &params, 9, Execution::Sequential).unwrap();
        let b = privatize_with(&h, &params, 9, Execution::Parallel).unwrap();
        assert_eq!(a.noisy, b.noisy);
        assert_eq!(a.histogram, b.histogram);
        let c = privatize(&h, &params, 10).unwrap();
        assert_ne!(a.noisy, c.noisy);
    }

    #[test]
    fn rejects_fractional_input_and_oversized_n() {
        let s = schema(10);
        let h = Histogram::from_counts(s.clone(), CountMode::Integer, (0..5).map(|i| (s.key_from_index(i), 5.0))).unwrap();
        let frac = h.with_mode(CountMode::Fractional).unwrap();
        let params = PrivacyParams::for_histogram(&h, 1.0, 0.9, None).unwrap();
        assert!(privatize(&frac, &params, 0).is_err());
        // n claims 100 inactive buckets but only 5 exist; tau is ~0.3 so
        // k ~ Binomial(100, 0.37) overshoots the true complement
        let params = PrivacyParams::new(1.0, 1e-20, 100).unwrap();
        assert!(matches!(privatize(&h, &params, 0), Err(Error::Sampling(_))));
    }

    #[test]
    fn fully_active_domain_has_zero_threshold() {
        let s = schema(4);
        let h = Histogram::from_counts(s.clone(), CountMode::Integer, (0..4).map(|i| (s.key_from_index(i), 50.0))).unwrap();
        let params = PrivacyParams::for_histogram(&h, 1.0, 0.9, None).unwrap();
        assert_eq!(params.n, 0);
        assert_eq!(params.tau, 0.0);
        let r = privatize(&h, &params, 1).unwrap();
        assert_eq!(r.spurious_added, 0);
    }
}
