//! Test fixtures and brute-force reference computations. Nothing here calls
//! into the library's metric or repair code.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use odrelease::{Attribute, AttributeSchema, BucketKey, CountMode, Histogram};
use rand::Rng;

pub fn schema(domains: &[usize]) -> Arc<AttributeSchema> {
    let attrs = domains
        .iter()
        .enumerate()
        .map(|(i, &d)| Attribute::new(format!("a{i}"), (0..d).map(|v| format!("v{v}"))))
        .collect();
    Arc::new(AttributeSchema::new(attrs).unwrap())
}

/// One-attribute histogram with labels `k0, k1, ...` and the given counts.
pub fn items(counts: &[f64]) -> Histogram {
    let schema = Arc::new(
        AttributeSchema::new(vec![Attribute::new("k", (0..counts.len()).map(|i| format!("k{i}")))]).unwrap(),
    );
    let mode = if counts.iter().all(|c| c.fract() == 0.0) {
        CountMode::Integer
    } else {
        CountMode::Fractional
    };
    Histogram::from_counts(
        schema,
        mode,
        counts.iter().enumerate().map(|(i, &c)| (BucketKey::from(vec![i as u32]), c)),
    )
    .unwrap()
}

/// Rows of `(labels, count)` for a histogram.
pub fn rows(h: &Histogram) -> Vec<(Vec<String>, f64)> {
    h.iter()
        .map(|(k, &c)| (h.schema().labels(k).into_iter().map(str::to_owned).collect(), c))
        .collect()
}

fn sum_by(rows: &[(Vec<String>, f64)], cols: &[usize]) -> HashMap<Vec<String>, f64> {
    let mut m = HashMap::new();
    for (labels, c) in rows {
        let key: Vec<String> = cols.iter().map(|&i| labels[i].clone()).collect();
        *m.entry(key).or_insert(0.0) += c;
    }
    m
}

/// Conditional mutual information in nats, straight from the definition.
pub fn cmi_oracle(h: &Histogram, x: usize, y: usize, z: &[usize]) -> f64 {
    let r = rows(h);
    let n: f64 = r.iter().map(|(_, c)| c).sum();
    let xyz: Vec<usize> = [x, y].iter().chain(z).copied().collect();
    let xz: Vec<usize> = std::iter::once(x).chain(z.iter().copied()).collect();
    let yz: Vec<usize> = std::iter::once(y).chain(z.iter().copied()).collect();
    let (c_xyz, c_xz, c_yz, c_z) = (sum_by(&r, &xyz), sum_by(&r, &xz), sum_by(&r, &yz), sum_by(&r, z));
    let mut total = 0.0;
    for (k, &c) in &c_xyz {
        if c <= 0.0 {
            continue;
        }
        let zk = k[2..].to_vec();
        let xk: Vec<String> = std::iter::once(k[0].clone()).chain(zk.iter().cloned()).collect();
        let yk: Vec<String> = std::iter::once(k[1].clone()).chain(zk.iter().cloned()).collect();
        total += c / n * (c * c_z[&zk] / (c_xz[&xk] * c_yz[&yk])).ln();
    }
    total
}

/// Marginal table over `cols`, keyed by labels.
pub fn marginal(h: &Histogram, cols: &[usize]) -> HashMap<Vec<String>, f64> {
    sum_by(&rows(h), cols)
}

/// `KL(P_p || P_q)` in nats over labels.
pub fn kl_oracle(p: &Histogram, q: &Histogram) -> f64 {
    let all: Vec<usize> = (0..p.schema().len()).collect();
    let (pm, qm) = (marginal(p, &all), marginal(q, &all));
    let (np, nq) = (p.total(), q.total());
    pm.iter()
        .map(|(k, &c)| {
            let a = c / np;
            let b = qm.get(k).copied().unwrap_or(0.0) / nq;
            a * (a / b).ln()
        })
        .sum()
}

/// Ranking of label rows: count descending, then label strings ascending.
fn ranking(keys: &[Vec<String>], counts: &HashMap<Vec<String>, f64>) -> Vec<Vec<String>> {
    let mut v = keys.to_vec();
    v.sort_by(|a, b| {
        let (ca, cb) = (counts.get(a).copied().unwrap_or(0.0), counts.get(b).copied().unwrap_or(0.0));
        cb.partial_cmp(&ca).unwrap().then_with(|| a.cmp(b))
    });
    v
}

/// PWKT by enumerating every pair: a discordant pair at reference positions
/// `i < j` (1-based) costs `(w(i) + w(j)) / 2`.
pub fn pwkt_oracle(reference: &Histogram, other: &Histogram, w: impl Fn(usize) -> f64) -> f64 {
    let to_map = |h: &Histogram| -> HashMap<Vec<String>, f64> { rows(h).into_iter().collect() };
    let (rm, om) = (to_map(reference), to_map(other));
    let mut keys: Vec<Vec<String>> = rm.keys().chain(om.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let r = ranking(&keys, &rm);
    let o = ranking(&keys, &om);
    let opos: HashMap<&Vec<String>, usize> = o.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut total = 0.0;
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            if opos[&r[i]] > opos[&r[j]] {
                total += (w(i + 1) + w(j + 1)) / 2.0;
            }
        }
    }
    total
}

pub fn harmonic(i: usize) -> f64 {
    1.0 / i as f64
}

/// Hellinger distance over labels.
pub fn hellinger_oracle(a: &Histogram, b: &Histogram) -> f64 {
    let all: Vec<usize> = (0..a.schema().len()).collect();
    let (am, bm) = (marginal(a, &all), marginal(b, &all));
    let bc: f64 = am
        .iter()
        .map(|(k, &c)| (c / a.total() * bm.get(k).copied().unwrap_or(0.0) / b.total()).sqrt())
        .sum();
    (1.0 - bc).max(0.0).sqrt()
}

/// A small random histogram over 2-4 attributes with up to 5 labels each and
/// full conditional support for `x = 0`, `y = 1`, `z = z_attrs`: within each
/// `z` stratum, every `(x, y)` pair whose `x` and `y` both occur is present.
pub struct SupportCase {
    pub histogram: Histogram,
    pub z: Vec<usize>,
}

pub fn random_full_support<R: Rng>(rng: &mut R) -> SupportCase {
    let k = rng.random_range(2..=4usize);
    let domains: Vec<usize> = (0..k).map(|_| rng.random_range(1..=5usize)).collect();
    let z: Vec<usize> = (2..k).filter(|_| rng.random_bool(0.5)).collect();
    let schema = schema(&domains);
    let max_count = (10_000 / schema.global_size() as usize).clamp(1, 40);
    let density = rng.random_range(0.2..1.0);
    let mut counts: HashMap<Vec<u32>, f64> = HashMap::new();
    for idx in 0..schema.global_size() {
        if rng.random_bool(density) {
            let key = schema.key_from_index(idx).values().to_vec();
            counts.insert(key, rng.random_range(1..=max_count) as f64);
        }
    }
    if counts.is_empty() {
        counts.insert(vec![0; k], 1.0);
    }
    // fill the missing (x, y) cells of each stratum
    let mut strata: HashMap<Vec<u32>, (Vec<u32>, Vec<u32>)> = HashMap::new();
    for key in counts.keys() {
        let zk: Vec<u32> = z.iter().map(|&i| key[i]).collect();
        let e = strata.entry(zk).or_default();
        e.0.push(key[0]);
        e.1.push(key[1]);
    }
    for (zk, (mut xs, mut ys)) in strata {
        xs.sort();
        xs.dedup();
        ys.sort();
        ys.dedup();
        for &xv in &xs {
            for &yv in &ys {
                let present = counts.keys().any(|key| {
                    key[0] == xv && key[1] == yv && z.iter().zip(&zk).all(|(&i, &v)| key[i] == v)
                });
                if !present {
                    let mut key = vec![0u32; k];
                    key[0] = xv;
                    key[1] = yv;
                    for (&i, &v) in z.iter().zip(&zk) {
                        key[i] = v;
                    }
                    counts.insert(key, 1.0);
                }
            }
        }
    }
    let histogram = Histogram::from_counts(
        schema,
        CountMode::Integer,
        counts.into_iter().map(|(k, c)| (BucketKey::from(k), c)),
    )
    .unwrap();
    SupportCase { histogram, z }
}

pub fn names(h: &Histogram, idx: &[usize]) -> Vec<String> {
    let all: Vec<&str> = h.schema().names().collect();
    idx.iter().map(|&i| all[i].to_owned()).collect()
}
