//! Seeded random streams.
//!
//! All randomness is drawn from ChaCha8 streams addressed by
//! `(seed, label, index)`. The label picks the stage ("laplace",
//! "bootstrap", ...) and the index picks the item within it, so each bin or
//! replicate owns an independent stream and results do not depend on
//! evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from a master seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(splitmix64(seed) ^ fnv1a(label))
}

/// Derives a child seed from a master seed, a label and an index.
pub fn derive_indexed_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(seed, label) ^ splitmix64(index.wrapping_add(1)))
}

/// Independent stream for item `index` of stage `label`.
pub fn substream(seed: u64, label: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, label));
    rng.set_stream(index);
    rng
}

/// Uniform draw from the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Inverse-CDF sampler over a finite set of nonnegative weights.
#[derive(Debug, Clone)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    /// Returns `None` when there is no positive weight.
    pub fn new<I: IntoIterator<Item = f64>>(weights: I) -> Option<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = weights
            .into_iter()
            .map(|w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        (acc > 0.0).then_some(Categorical { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let target = rng.random::<f64>() * total;
        // first index whose cumulative weight exceeds the target; skips zero-weight entries
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.cumulative.len() - 1)
    }
}
