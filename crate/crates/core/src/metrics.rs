//! Distances between histograms and bootstrap variance bands.
//!
//! Two distances are provided:
//!
//! * Hellinger distance `sqrt(1 - sum sqrt(p q))` over the union of the two
//!   supports, insensitive to rank;
//! * position-weighted Kendall's tau (PWKT). Both histograms are ranked by
//!   count (descending, ties by lexicographic key); every pair of buckets
//!   ordered differently by the two rankings costs `(w(i) + w(j)) / 2`, where
//!   `i` and `j` are the pair's 1-based positions in the reference ranking and
//!   `w(i) = 1 / i`.
//!
//! A bootstrap band compares a histogram with resamples of its own trips; a
//! repair whose distance falls inside (or below) the band changes the data
//! no more than sampling noise would.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{ensure_same_schema, support_union, CountMode, Histogram};
use crate::par::{map_indices, Execution};
use crate::rng::substream;
use crate::schema::BucketKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Pwkt,
    Hellinger,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pwkt" => Ok(Metric::Pwkt),
            "hellinger" => Ok(Metric::Hellinger),
            other => Err(Error::param(format!("unknown metric `{other}`"))),
        }
    }
}

/// Position weight for PWKT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `w(i) = 1 / i`
    #[default]
    Harmonic,
    /// `w(i) = e^{-(i - 1)}`; concentrates almost all weight on the top few
    /// positions.
    Exponential,
}

impl Weighting {
    fn weight(self, position: usize) -> f64 {
        match self {
            Weighting::Harmonic => 1.0 / position as f64,
            Weighting::Exponential => (-((position - 1) as f64)).exp(),
        }
    }
}

pub fn hellinger(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    ensure_same_schema(h1, h2)?;
    if h1.total() <= 0.0 || h2.total() <= 0.0 {
        return Err(Error::EmptyInput("hellinger distance of an empty histogram".into()));
    }
    let bc: f64 = h1.iter().map(|(k, &c)| (c * h2.get(k)).sqrt()).sum::<f64>() / (h1.total() * h2.total()).sqrt();
    Ok(hellinger_from_bc(bc))
}

fn hellinger_from_bc(bc: f64) -> f64 {
    (1.0 - bc).max(0.0).sqrt().min(1.0)
}

/// Hellinger distance between two aligned count vectors.
fn hellinger_aligned(a: &[f64], a_total: f64, b: &[f64], b_total: f64) -> f64 {
    let bc: f64 = a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum::<f64>() / (a_total * b_total).sqrt();
    hellinger_from_bc(bc)
}

pub fn pwkt(reference: &Histogram, other: &Histogram) -> Result<f64> {
    pwkt_weighted(reference, other, Weighting::Harmonic)
}

pub fn pwkt_weighted(reference: &Histogram, other: &Histogram, weighting: Weighting) -> Result<f64> {
    let keys = support_union(reference, other)?;
    let lex: Vec<Vec<u32>> = keys.iter().map(|k| reference.schema().lex_sort_key(k)).collect();
    let counts: Vec<f64> = keys.iter().map(|k| other.get(k)).collect();
    Ok(pwkt_aligned(&counts, &lex, weighting))
}

/// PWKT where item `i` sits at reference position `i + 1` and the
/// comparison ranking orders items by `counts` descending, ties by `lex`.
fn pwkt_aligned(counts: &[f64], lex: &[Vec<u32>], weighting: Weighting) -> f64 {
    let m = counts.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| counts[b].total_cmp(&counts[a]).then_with(|| lex[a].cmp(&lex[b])));
    let mut other_pos = vec![0usize; m];
    for (pos, &item) in order.iter().enumerate() {
        other_pos[item] = pos;
    }
    pwkt_from_positions(&other_pos, weighting)
}

/// `other_pos[i]` is the 0-based comparison-ranking position of the item at
/// 0-based reference position `i`.
///
/// Item `i` is discordant with `i - c` earlier items and `q - c` later ones,
/// where `q = other_pos[i]` and `c` counts earlier items placed before `q`;
/// a Fenwick tree over comparison positions gives `c` in `O(log m)`. The
/// total cost is `1/2 sum_i w(i) * discordant(i)`.
pub(crate) fn pwkt_from_positions(other_pos: &[usize], weighting: Weighting) -> f64 {
    let m = other_pos.len();
    let mut tree = vec![0u32; m + 1];
    let mut sum = 0.0;
    for (i, &q) in other_pos.iter().enumerate() {
        let mut c = 0u64;
        let mut j = q;
        while j > 0 {
            c += u64::from(tree[j]);
            j &= j - 1;
        }
        let discordant = i as u64 + q as u64 - 2 * c;
        sum += weighting.weight(i + 1) * discordant as f64;
        let mut j = q + 1;
        while j <= m {
            tree[j] += 1;
            j += j & j.wrapping_neg();
        }
    }
    0.5 * sum
}

/// Percentile with linear interpolation at rank `1 + p (m - 1)` of the
/// sorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of no values".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("percentile {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// 2.5th percentile, mean and 97.5th percentile of a set of distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub p2_5: f64,
    pub mean: f64,
    pub p97_5: f64,
}

impl Band {
    pub fn from_values(values: &[f64]) -> Result<Band> {
        Ok(Band {
            p2_5: percentile(values, 0.025)?,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p97_5: percentile(values, 0.975)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub execution: Execution,
}

impl BootstrapOptions {
    pub const DEFAULT_REPLICATES: usize = 200;

    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapOptions {
            replicates,
            seed,
            weighting: Weighting::default(),
            execution: Execution::default(),
        }
    }
}

/// Per-replicate distances between a histogram and its resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSample {
    pub pwkt: Vec<f64>,
    pub hellinger: Vec<f64>,
}

impl BootstrapSample {
    pub fn values(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Pwkt => &self.pwkt,
            Metric::Hellinger => &self.hellinger,
        }
    }

    pub fn bands(&self) -> Result<Bands> {
        Ok(Bands {
            pwkt: Band::from_values(&self.pwkt)?,
            hellinger: Band::from_values(&self.hellinger)?,
        })
    }

    /// CSV with columns `replicate,pwkt,hellinger`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["replicate", "pwkt", "hellinger"])?;
        for (i, (p, h)) in self.pwkt.iter().zip(&self.hellinger).enumerate() {
            w.write_record([i.to_string(), p.to_string(), h.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Resamples `total(h)` trips with replacement from `h`'s trips for each
/// replicate and measures both distances from `h` to the resample.
/// Replicate `r` uses its own random substream.
pub fn bootstrap_distances(h: &Histogram, opts: &BootstrapOptions) -> Result<BootstrapSample> {
    if h.mode() != CountMode::Integer {
        return Err(Error::param("bootstrap needs integer trip counts"));
    }
    if h.total() <= 0.0 {
        return Err(Error::EmptyInput("bootstrap of an empty histogram".into()));
    }
    if opts.replicates < 2 {
        return Err(Error::param("bootstrap needs at least 2 replicates"));
    }
    let keys: Vec<BucketKey> = h.ranking();
    let lex: Vec<Vec<u32>> = keys.iter().map(|k| h.schema().lex_sort_key(k)).collect();
    let counts: Vec<f64> = keys.iter().map(|k| h.get(k)).collect();
    let mut cumulative = Vec::with_capacity(counts.len());
    let mut acc = 0u64;
    for &c in &counts {
        acc += c as u64;
        cumulative.push(acc);
    }
    let total = acc;

    let per_replicate = map_indices(opts.execution, opts.replicates, |r| {
        use rand::Rng;
        let mut rng = substream(opts.seed, "bootstrap", r as u64);
        let mut resample = vec![0.0; counts.len()];
        for _ in 0..total {
            let trip = rng.random_range(0..total);
            resample[cumulative.partition_point(|&c| c <= trip)] += 1.0;
        }
        let pw = pwkt_aligned(&resample, &lex, opts.weighting);
        let he = hellinger_aligned(&counts, total as f64, &resample, total as f64);
        (pw, he)
    });
    let (pwkt, hellinger) = per_replicate.into_iter().unzip();
    Ok(BootstrapSample { pwkt, hellinger })
}

pub fn bootstrap_band(h: &Histogram, metric: Metric, replicates: usize, seed: u64) -> Result<Band> {
    let sample = bootstrap_distances(h, &BootstrapOptions::new(replicates, seed))?;
    Band::from_values(sample.values(metric))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub pwkt: Band,
    pub hellinger: Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub pwkt: f64,
    pub hellinger: f64,
}

impl Distances {
    pub fn between(reference: &Histogram, other: &Histogram, weighting: Weighting) -> Result<Distances> {
        Ok(Distances {
            pwkt: pwkt_weighted(reference, other, weighting)?,
            hellinger: hellinger(reference, other)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub pwkt: f64,
    pub hellinger: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band: Option<Bands>,
    /// Distances of the random-X baseline from the reference.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline: Option<Distances>,
    pub replicates: usize,
    pub seed: u64,
}

/// Distances from `reference` to `other`, with the bootstrap band of
/// `reference` when options are given. The per-replicate sample is returned
/// alongside for CSV export.
pub fn measure(
    reference: &Histogram,
    other: &Histogram,
    weighting: Weighting,
    bootstrap: Option<&BootstrapOptions>,
) -> Result<(DistanceReport, Option<BootstrapSample>)> {
    let d = Distances::between(reference, other, weighting)?;
    let sample = bootstrap.map(|opts| bootstrap_distances(reference, opts)).transpose()?;
    let band = sample.as_ref().map(BootstrapSample::bands).transpose()?;
    Ok((
        DistanceReport {
            pwkt: d.pwkt,
            hellinger: d.hellinger,
            band,
            baseline: None,
            replicates: bootstrap.map_or(0, |o| o.replicates),
            seed: bootstrap.map_or(0, |o| o.seed),
        },
        sample,
    ))
}
