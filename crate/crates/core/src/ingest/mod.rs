//! Raw trip files to histograms, plus the synthetic ride-hailing generator.

mod bike;
mod synth;
mod taxi;
mod tertiles;
mod time;

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::histogram::Histogram;

pub use bike::{bike_preprocess, bike_schema, BikeConfig, SurveyColumns, TripColumns};
pub use synth::{
    correlated_rating_distributions, gravity_od_seed, read_od_seed, synth_generate, SynthConfig, SynthFile, SynthMode,
    CORRELATED_MIX, DEFAULT_RATING_DISTRIBUTION,
};
pub use taxi::{
    round_coordinate, taxi_preprocess, taxi_schema, tenths_label, tip_is_high, BoundingBox, TaxiColumns, TaxiConfig,
};
pub use tertiles::{tertiles, tier_sizes, Tier, ValueTertiles};
pub use time::{parse_time_of_day, time_bucket, TimeOfDay};

/// Row accounting for one ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows: usize,
    /// Rows with an empty required field.
    pub missing: usize,
    pub malformed: usize,
    /// Well-formed rows excluded by a rule (payment type, bounding box,
    /// label outside the configured domain).
    pub filtered: usize,
    /// Trips without a matching survey entry.
    pub unmatched: usize,
    pub retained: usize,
}

impl IngestStats {
    fn check_malformed_ratio(&self) -> Result<()> {
        if self.rows > 0 && 2 * self.malformed > self.rows {
            return Err(Error::Malformed(format!(
                "{} of {} rows are malformed",
                self.malformed, self.rows
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub histogram: Histogram,
    pub stats: IngestStats,
    pub warnings: Vec<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::schema(format!("input has no column {name:?}")))
}

/// Reads a label list, one per line. Blank lines and surrounding whitespace
/// are ignored.
pub fn read_label_list<R: Read>(reader: R) -> Result<Vec<String>> {
    let mut labels = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let line = line.trim();
        if !line.is_empty() {
            labels.push(line.to_owned());
        }
    }
    Ok(labels)
}

pub fn read_label_list_file<P: AsRef<Path>>(path: P) -> Result<Vec<String>> {
    read_label_list(std::fs::File::open(path)?)
}
