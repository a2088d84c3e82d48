//! Sparse contingency tables over an [`AttributeSchema`].
//!
//! Only buckets with a positive count are stored (the active domain); the
//! global domain lives in the schema.

use std::cmp::Ordering;
use std::collections::btree_map::{self, BTreeMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, BucketKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountMode {
    /// Raw trip counts; every stored count is a positive integer.
    Integer,
    /// Real-valued counts produced by repair or noise.
    Fractional,
}

/// Map from full bucket key to probability.
pub type Distribution = BTreeMap<BucketKey, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    schema: Arc<AttributeSchema>,
    counts: BTreeMap<BucketKey, f64>,
    mode: CountMode,
    total: f64,
}

fn validate_count(count: f64, mode: CountMode) -> Result<()> {
    if !count.is_finite() || count < 0.0 {
        return Err(Error::Malformed(format!("count {count} is not a nonnegative number")));
    }
    if mode == CountMode::Integer && (count.fract() != 0.0 || count > 9.007_199_254_740_992e15) {
        return Err(Error::Malformed(format!("count {count} is not an exact integer")));
    }
    Ok(())
}

impl Histogram {
    pub fn empty(schema: Arc<AttributeSchema>, mode: CountMode) -> Self {
        Histogram {
            schema,
            counts: BTreeMap::new(),
            mode,
            total: 0.0,
        }
    }

    fn from_map(schema: Arc<AttributeSchema>, mut counts: BTreeMap<BucketKey, f64>, mode: CountMode) -> Self {
        counts.retain(|_, c| *c > 0.0);
        let total = counts.values().sum();
        Histogram {
            schema,
            counts,
            mode,
            total,
        }
    }

    /// Builds a histogram from distinct `(key, count)` pairs. Zero counts are
    /// dropped; duplicate keys are an error.
    pub fn from_counts<I>(schema: Arc<AttributeSchema>, mode: CountMode, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BucketKey, f64)>,
    {
        let mut counts = BTreeMap::new();
        for (key, count) in entries {
            check_key(&schema, &key)?;
            validate_count(count, mode)?;
            if counts.insert(key.clone(), count).is_some() {
                return Err(Error::Malformed(format!(
                    "duplicate bucket {:?}",
                    schema.labels(&key)
                )));
            }
        }
        Ok(Self::from_map(schema, counts, mode))
    }

    /// Like [`Histogram::from_counts`] but sums repeated keys.
    pub fn aggregate<I>(schema: Arc<AttributeSchema>, mode: CountMode, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BucketKey, f64)>,
    {
        let mut counts: BTreeMap<BucketKey, f64> = BTreeMap::new();
        for (key, count) in entries {
            check_key(&schema, &key)?;
            validate_count(count, mode)?;
            *counts.entry(key).or_insert(0.0) += count;
        }
        Ok(Self::from_map(schema, counts, mode))
    }

    /// Convenience constructor from label rows.
    pub fn from_labeled<S: AsRef<str>>(
        schema: Arc<AttributeSchema>,
        mode: CountMode,
        rows: &[(&[S], f64)],
    ) -> Result<Self> {
        let entries = rows
            .iter()
            .map(|(labels, c)| Ok((schema.key(labels)?, *c)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(schema, mode, entries)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<AttributeSchema> {
        &self.schema
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    /// Count of a bucket; 0 for buckets outside the active domain.
    pub fn get(&self, key: &BucketKey) -> f64 {
        self.counts.get(key).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, key: &BucketKey) -> bool {
        self.counts.contains_key(key)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, BucketKey, f64> {
        self.counts.iter()
    }

    pub fn keys(&self) -> btree_map::Keys<'_, BucketKey, f64> {
        self.counts.keys()
    }

    /// Number of active buckets.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all counts (|R| for raw data).
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Returns a copy in the other count mode. Converting to integer mode
    /// fails unless every count is integral.
    pub fn with_mode(&self, mode: CountMode) -> Result<Histogram> {
        if mode == CountMode::Integer {
            for &c in self.counts.values() {
                validate_count(c, mode)?;
            }
        }
        Ok(Histogram {
            mode,
            ..self.clone()
        })
    }

    /// Contingency table over the named attributes.
    pub fn marginalize<S: AsRef<str>>(&self, attrs: &[S]) -> Result<Marginal> {
        let indices = self.schema.indices_of(attrs)?;
        Ok(self.marginalize_indices(&indices))
    }

    pub fn marginalize_indices(&self, indices: &[usize]) -> Marginal {
        let mut counts: BTreeMap<BucketKey, f64> = BTreeMap::new();
        for (key, &c) in &self.counts {
            *counts.entry(key.project(indices)).or_insert(0.0) += c;
        }
        Marginal {
            attributes: indices.to_vec(),
            counts,
        }
    }

    /// Counts divided by the total.
    pub fn normalize(&self) -> Result<Distribution> {
        if self.total <= 0.0 {
            return Err(Error::EmptyInput("cannot normalize an empty histogram".into()));
        }
        Ok(self
            .counts
            .iter()
            .map(|(k, &c)| (k.clone(), c / self.total))
            .collect())
    }

    /// Aggregates to a histogram over only the `keep` attributes.
    pub fn group_by<S: AsRef<str>>(&self, keep: &[S]) -> Result<Histogram> {
        let indices = self.schema.indices_of(keep)?;
        let schema = Arc::new(self.schema.project(&indices));
        let marginal = self.marginalize_indices(&indices);
        Ok(Histogram::from_map(schema, marginal.counts, self.mode))
    }

    /// Keys ordered by count descending, ties by lexicographic label order.
    pub fn ranking(&self) -> Vec<BucketKey> {
        let mut keys: Vec<(&BucketKey, f64, Vec<u32>)> = self
            .counts
            .iter()
            .map(|(k, &c)| (k, c, self.schema.lex_sort_key(k)))
            .collect();
        keys.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
        keys.into_iter().map(|(k, _, _)| k.clone()).collect()
    }

    /// Commutative sum of two histograms over the same schema.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        ensure_same_schema(self, other)?;
        let mut counts = self.counts.clone();
        for (k, &c) in &other.counts {
            *counts.entry(k.clone()).or_insert(0.0) += c;
        }
        let mode = if self.mode == CountMode::Integer && other.mode == CountMode::Integer {
            CountMode::Integer
        } else {
            CountMode::Fractional
        };
        Ok(Histogram::from_map(self.schema.clone(), counts, mode))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.names().collect();
        header.push("count");
        w.write_record(&header)?;
        for (key, &count) in &self.counts {
            let mut row: Vec<String> = self.schema.labels(key).into_iter().map(str::to_owned).collect();
            row.push(format_count(count, self.mode));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the histogram CSV format: a header of the schema's attribute
    /// names plus `count`, then one bucket per row. The mode is integer iff
    /// every count is written as an integer.
    pub fn read_csv<R: Read>(reader: R, schema: Arc<AttributeSchema>) -> Result<Histogram> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let expected: Vec<&str> = schema.names().chain(std::iter::once("count")).collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::schema(format!(
                "histogram header {:?} does not match schema {:?}",
                header.iter().collect::<Vec<_>>(),
                expected
            )));
        }
        let n = schema.len();
        let mut all_integer = true;
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record?;
            let labels: Vec<&str> = record.iter().take(n).collect();
            // a label outside the schema is bad data, not bad configuration
            let key = schema.key(&labels).map_err(|e| Error::Malformed(e.to_string()))?;
            let raw = record.get(n).unwrap_or("").trim();
            let count = if let Ok(v) = raw.parse::<u64>() {
                v as f64
            } else {
                all_integer = false;
                raw.parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("bad count `{raw}`")))?
            };
            entries.push((key, count));
        }
        let mode = if all_integer {
            CountMode::Integer
        } else {
            CountMode::Fractional
        };
        Histogram::from_counts(schema, mode, entries)
    }

    pub fn read_csv_file<P: AsRef<Path>>(path: P, schema: Arc<AttributeSchema>) -> Result<Histogram> {
        Self::read_csv(std::fs::File::open(path)?, schema)
    }
}

fn format_count(count: f64, mode: CountMode) -> String {
    match mode {
        CountMode::Integer => format!("{}", count as u64),
        CountMode::Fractional => format!("{count:.9}"),
    }
}

fn check_key(schema: &AttributeSchema, key: &BucketKey) -> Result<()> {
    if key.values().len() != schema.len() {
        return Err(Error::Malformed(format!(
            "key has {} components, schema has {} attributes",
            key.values().len(),
            schema.len()
        )));
    }
    for (attr, &v) in schema.attributes().iter().zip(key.values()) {
        if v as usize >= attr.domain.len() {
            return Err(Error::Malformed(format!("value index {v} out of domain for `{}`", attr.name)));
        }
    }
    Ok(())
}

pub(crate) fn ensure_same_schema(a: &Histogram, b: &Histogram) -> Result<()> {
    if a.schema != b.schema {
        return Err(Error::schema("histograms have different schemas"));
    }
    Ok(())
}

/// Every key present in either histogram, once, ordered by `h1` count
/// descending with ties broken by lexicographic label order.
pub fn support_union(h1: &Histogram, h2: &Histogram) -> Result<Vec<BucketKey>> {
    ensure_same_schema(h1, h2)?;
    let schema = h1.schema();
    let mut keys: Vec<(BucketKey, f64, Vec<u32>)> = h1
        .iter()
        .map(|(k, &c)| (k.clone(), c, schema.lex_sort_key(k)))
        .collect();
    keys.extend(
        h2.keys()
            .filter(|k| !h1.contains(k))
            .map(|k| (k.clone(), 0.0, schema.lex_sort_key(k))),
    );
    keys.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.2.cmp(&b.2),
        o => o,
    });
    Ok(keys.into_iter().map(|(k, _, _)| k).collect())
}

/// Contingency table over a subset of attributes, keyed by partial keys
/// (components in the order of [`Marginal::attributes`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    attributes: Vec<usize>,
    counts: BTreeMap<BucketKey, f64>,
}

impl Marginal {
    pub fn attributes(&self) -> &[usize] {
        &self.attributes
    }

    /// Count for a partial key; 0 when absent.
    pub fn get(&self, partial: &BucketKey) -> f64 {
        self.counts.get(partial).copied().unwrap_or(0.0)
    }

    /// Count for the projection of a full key.
    pub fn get_projected(&self, full: &BucketKey) -> f64 {
        self.get(&full.project(&self.attributes))
    }

    pub fn iter(&self) -> btree_map::Iter<'_, BucketKey, f64> {
        self.counts.iter()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }
}
