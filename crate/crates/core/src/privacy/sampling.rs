//! Noise samplers used by the release mechanism.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::rng::open_unit;

/// Laplace draw by inverse CDF: `location - scale * sgn(u) * ln(1 - 2|u|)`
/// with `u` uniform on (-1/2, 1/2).
pub fn laplace_sample<R: Rng + ?Sized>(location: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !scale.is_finite() || scale <= 0.0 || !location.is_finite() {
        return Err(Error::param(format!("laplace: invalid location {location} / scale {scale}")));
    }
    let u = open_unit(rng) - 0.5;
    Ok(location - scale * u.signum() * (-2.0 * u.abs()).ln_1p())
}

/// Exponential draw with the given mean (rate `1 / mean`).
pub fn exponential_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<f64> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::param(format!("exponential: invalid mean {mean}")));
    }
    Ok(-mean * open_unit(rng).ln())
}

/// Exact binomial draw.
pub fn binomial_sample<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    let dist = Binomial::new(n, p).map_err(|e| Error::param(format!("binomial(n={n}, p={p}): {e}")))?;
    Ok(dist.sample(rng))
}
