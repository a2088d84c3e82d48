//! Uniform sampling of buckets outside the active domain.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, BucketKey};

/// Draws `k` distinct keys uniformly from the global domain minus `active`.
///
/// Rejection sampling against the cross product is used while the
/// complement is at least `2k`; smaller complements are enumerated by index
/// and sampled without replacement.
pub fn complement_sample<R: Rng + ?Sized>(
    schema: &AttributeSchema,
    active: &HashSet<BucketKey>,
    k: u64,
    rng: &mut R,
) -> Result<Vec<BucketKey>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let global = schema.global_size();
    let complement = global.saturating_sub(active.len() as u64);
    if k > complement {
        return Err(Error::Sampling(format!(
            "cannot draw {k} keys from a complement of {complement}"
        )));
    }
    if complement >= k.saturating_mul(2) {
        let mut chosen = HashSet::with_capacity(k as usize);
        let mut out = Vec::with_capacity(k as usize);
        while (out.len() as u64) < k {
            let key = schema.key_from_index(rng.random_range(0..global));
            if active.contains(&key) || !chosen.insert(key.clone()) {
                continue;
            }
            out.push(key);
        }
        Ok(out)
    } else {
        // complement < 2k, so global < |active| + 2k and enumeration is cheap
        let pool: Vec<u64> = (0..global)
            .filter(|&i| !active.contains(&schema.key_from_index(i)))
            .collect();
        if (pool.len() as u64) < k {
            return Err(Error::Sampling("active set holds keys outside the schema".into()));
        }
        Ok(index::sample(rng, pool.len(), k as usize)
            .into_iter()
            .map(|i| schema.key_from_index(pool[i]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::schema::Attribute;

    fn schema() -> AttributeSchema {
        AttributeSchema::new(vec![Attribute::new("a", ["p", "q"]), Attribute::new("b", ["0", "1"])]).unwrap()
    }

    #[test]
    fn zero_draws() {
        let mut rng = substream(1, "c", 0);
        assert!(complement_sample(&schema(), &HashSet::new(), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn forced_single_key() {
        let s = schema();
        let active: HashSet<BucketKey> = (0..3).map(|i| s.key_from_index(i)).collect();
        let mut rng = substream(1, "c", 0);
        let got = complement_sample(&s, &active, 1, &mut rng).unwrap();
        assert_eq!(got, vec![s.key_from_index(3)]);
        assert!(complement_sample(&s, &active, 2, &mut rng).is_err());
    }

    #[test]
    fn draws_are_distinct_and_outside_active() {
        let s = AttributeSchema::new(vec![Attribute::new("a", (0..30).map(|i| i.to_string()))]).unwrap();
        let active: HashSet<BucketKey> = (0..10).map(|i| s.key_from_index(i)).collect();
        for (seed, k) in [(1u64, 3u64), (2, 15), (3, 20)] {
            let mut rng = substream(seed, "c", 0);
            let got = complement_sample(&s, &active, k, &mut rng).unwrap();
            assert_eq!(got.len() as u64, k);
            let set: HashSet<_> = got.iter().cloned().collect();
            assert_eq!(set.len() as u64, k);
            assert!(got.iter().all(|key| !active.contains(key)));
        }
    }
}
