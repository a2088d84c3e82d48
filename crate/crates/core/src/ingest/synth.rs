//! Synthetic ride-hailing trips: OD pairs from a seed histogram, a uniform
//! random gender and a rating that is either independent of gender or drawn
//! from a per-gender distribution.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{CountMode, Histogram};
use crate::rng::{substream, Categorical};
use crate::schema::{Attribute, AttributeSchema, BucketKey};

pub const DEFAULT_RATING_DISTRIBUTION: [f64; 5] = [0.05, 0.10, 0.20, 0.30, 0.35];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    #[default]
    Uncorrelated,
    Correlated,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Histogram over `(origin, destination)`; normalized before sampling.
    pub od_seed: Histogram,
    pub trips: u64,
    pub mode: SynthMode,
    pub gender_domain: Vec<String>,
    pub rating_domain: Vec<String>,
    /// One distribution when uncorrelated, one per gender when correlated.
    pub rating_distributions: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Weight of the shifted component in the default correlated distributions.
pub const CORRELATED_MIX: f64 = 0.6;

/// Per-gender rating distributions: gender `g` gets
/// `(1 - mix) * base + mix * rotate(base, 2g)`.
pub fn correlated_rating_distributions(base: &[f64], genders: usize, mix: f64) -> Vec<Vec<f64>> {
    let m = base.len();
    (0..genders)
        .map(|g| {
            let shift = if m == 0 { 0 } else { (2 * g) % m };
            (0..m).map(|r| (1.0 - mix) * base[r] + mix * base[(r + m - shift) % m]).collect()
        })
        .collect()
}

fn zone_label(i: usize, zones: usize) -> String {
    let width = zones.to_string().len().max(2);
    format!("n{:0width$}", i + 1)
}

/// Deterministic OD seed over `zones` zones on a ring: zone populations fall
/// off as `1/(i+1)`, and flow between zones is `pop_i * pop_j / (1 + d)`
/// where `d` is the ring distance.
pub fn gravity_od_seed(zones: usize) -> Result<Histogram> {
    if zones == 0 {
        return Err(Error::param("zone count must be positive"));
    }
    let labels: Vec<String> = (0..zones).map(|i| zone_label(i, zones)).collect();
    let schema = Arc::new(AttributeSchema::new(vec![
        Attribute::new("origin", labels.clone()),
        Attribute::new("destination", labels),
    ])?);
    let pop = |i: usize| 1.0 / (i + 1) as f64;
    let mut entries = Vec::with_capacity(zones * zones);
    for i in 0..zones {
        for j in 0..zones {
            let d = i.abs_diff(j).min(zones - i.abs_diff(j)) as f64;
            let flow = pop(i) * pop(j) / (1.0 + d);
            entries.push((BucketKey::from(vec![i as u32, j as u32]), flow));
        }
    }
    Histogram::from_counts(schema, CountMode::Fractional, entries)
}

/// Reads an OD seed CSV with header `origin,destination,count`; the domains
/// are the labels that appear, sorted.
pub fn read_od_seed<R: Read>(reader: R) -> Result<Histogram> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["origin", "destination", "count"] {
        return Err(Error::schema("od seed header must be origin,destination,count"));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let count: f64 = record[2]
            .parse()
            .map_err(|_| Error::Malformed(format!("bad od seed count {:?}", &record[2])))?;
        rows.push((record[0].to_owned(), record[1].to_owned(), count));
    }
    let origins: BTreeSet<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    let dests: BTreeSet<&str> = rows.iter().map(|r| r.1.as_str()).collect();
    if origins.is_empty() {
        return Err(Error::EmptyInput("od seed has no rows".into()));
    }
    let schema = Arc::new(AttributeSchema::new(vec![
        Attribute::new("origin", origins),
        Attribute::new("destination", dests),
    ])?);
    let entries = rows
        .iter()
        .map(|(o, d, c)| Ok((schema.key(&[o, d])?, *c)))
        .collect::<Result<Vec<_>>>()?;
    Histogram::aggregate(schema, CountMode::Fractional, entries)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.od_seed.schema().len() != 2 {
            return Err(Error::schema("od seed must have exactly two attributes (origin, destination)"));
        }
        if self.gender_domain.is_empty() || self.rating_domain.is_empty() {
            return Err(Error::schema("gender and rating domains must be non-empty"));
        }
        let expected = match self.mode {
            SynthMode::Uncorrelated => 1,
            SynthMode::Correlated => self.gender_domain.len(),
        };
        if self.rating_distributions.len() != expected {
            return Err(Error::param(format!(
                "{:?} mode needs {expected} rating distributions, got {}",
                self.mode,
                self.rating_distributions.len()
            )));
        }
        for d in &self.rating_distributions {
            if d.len() != self.rating_domain.len() {
                return Err(Error::param("rating distribution length differs from the rating domain"));
            }
            if d.iter().any(|&p| p.is_nan() || p < 0.0) || (d.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::param(format!("rating distribution {d:?} does not sum to 1")));
            }
        }
        Ok(())
    }

    fn schema(&self) -> Result<AttributeSchema> {
        let od = self.od_seed.schema().attributes();
        AttributeSchema::new(vec![
            Attribute::new("origin", od[0].domain.iter().cloned()),
            Attribute::new("destination", od[1].domain.iter().cloned()),
            Attribute::new("gender", self.gender_domain.iter().cloned()),
            Attribute::new("rating", self.rating_domain.iter().cloned()),
        ])
    }
}

/// Draws `cfg.trips` trips and aggregates them over
/// `origin, destination, gender, rating`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Histogram> {
    cfg.validate()?;
    let schema = Arc::new(cfg.schema()?);
    let od_keys: Vec<&BucketKey> = cfg.od_seed.keys().collect();
    let od = Categorical::new(cfg.od_seed.iter().map(|(_, &c)| c))
        .ok_or_else(|| Error::EmptyInput("od seed histogram is empty".into()))?;
    let ratings: Vec<Categorical> = cfg
        .rating_distributions
        .iter()
        .map(|d| Categorical::new(d.iter().copied()).ok_or_else(|| Error::param("rating distribution is all zero")))
        .collect::<Result<_>>()?;
    let genders = cfg.gender_domain.len();

    let mut rng = substream(cfg.seed, "synth", 0);
    let mut counts = std::collections::BTreeMap::<BucketKey, f64>::new();
    for _ in 0..cfg.trips {
        let pair = od_keys[od.sample(&mut rng)];
        let g = rand::Rng::random_range(&mut rng, 0..genders);
        let dist = match cfg.mode {
            SynthMode::Uncorrelated => &ratings[0],
            SynthMode::Correlated => &ratings[g],
        };
        let r = dist.sample(&mut rng);
        let key = BucketKey::from(vec![pair.get(0), pair.get(1), g as u32, r as u32]);
        *counts.entry(key).or_insert(0.0) += 1.0;
    }
    Histogram::from_counts(schema, CountMode::Integer, counts)
}

/// JSON form of the generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthFile {
    pub trips: u64,
    pub mode: SynthMode,
    /// Zones of the built-in gravity OD seed; ignored when `od_seed` is set.
    pub zones: usize,
    /// Optional `origin,destination,count` CSV, relative to the config file.
    pub od_seed: Option<String>,
    pub gender_domain: Vec<String>,
    pub rating_domain: Vec<String>,
    /// Defaults to the built-in distributions for the mode.
    pub rating_distributions: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl Default for SynthFile {
    fn default() -> Self {
        SynthFile {
            trips: 100_000,
            mode: SynthMode::Uncorrelated,
            zones: 14,
            od_seed: None,
            gender_domain: ["m", "f", "o"].map(String::from).to_vec(),
            rating_domain: (1..=5).map(|r| r.to_string()).collect(),
            rating_distributions: None,
            seed: 0,
        }
    }
}

impl SynthFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Resolves the file into a generator config; relative paths are taken
    /// from `base_dir`.
    pub fn into_config(self, base_dir: Option<&Path>) -> Result<SynthConfig> {
        let od_seed = match &self.od_seed {
            Some(p) => {
                let path = base_dir.map_or_else(|| Path::new(p).to_path_buf(), |d| d.join(p));
                read_od_seed(std::fs::File::open(path)?)?
            }
            None => gravity_od_seed(self.zones)?,
        };
        let rating_distributions = match self.rating_distributions {
            Some(d) => d,
            None => {
                if self.rating_domain.len() != DEFAULT_RATING_DISTRIBUTION.len() {
                    return Err(Error::param("custom rating domain needs explicit rating_distributions"));
                }
                match self.mode {
                    SynthMode::Uncorrelated => vec![DEFAULT_RATING_DISTRIBUTION.to_vec()],
                    SynthMode::Correlated => {
                        correlated_rating_distributions(&DEFAULT_RATING_DISTRIBUTION, self.gender_domain.len(), CORRELATED_MIX)
                    }
                }
            }
        };
        Ok(SynthConfig {
            od_seed,
            trips: self.trips,
            mode: self.mode,
            gender_domain: self.gender_domain,
            rating_domain: self.rating_domain,
            rating_distributions,
            seed: self.seed,
        })
    }
}
