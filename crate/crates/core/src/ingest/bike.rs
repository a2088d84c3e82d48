//! Bike-share trips joined with a rider survey.
//!
//! Attributes: `start_nhood, end_nhood, time_of_day, helmet, company,
//! gender`. Neighborhood labels come from a configured list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::time::{parse_time_of_day, time_bucket, TimeOfDay};
use super::{column_index, IngestOutput, IngestStats};
use crate::error::{Error, Result};
use crate::histogram::{CountMode, Histogram};
use crate::schema::{Attribute, AttributeSchema, BucketKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripColumns {
    pub rider_id: String,
    pub company: String,
    pub start_time: String,
    pub start_neighborhood: String,
    pub end_neighborhood: String,
}

impl Default for TripColumns {
    fn default() -> Self {
        TripColumns {
            rider_id: "rider_id".into(),
            company: "company".into(),
            start_time: "start_time".into(),
            start_neighborhood: "start_neighborhood".into(),
            end_neighborhood: "end_neighborhood".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyColumns {
    pub rider_id: String,
    pub gender: String,
    pub helmet: String,
}

impl Default for SurveyColumns {
    fn default() -> Self {
        SurveyColumns {
            rider_id: "rider_id".into(),
            gender: "gender".into(),
            helmet: "helmet".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BikeConfig {
    pub trip_columns: TripColumns,
    pub survey_columns: SurveyColumns,
    pub companies: Vec<String>,
    pub genders: Vec<String>,
    pub helmet: Vec<String>,
}

impl Default for BikeConfig {
    fn default() -> Self {
        BikeConfig {
            trip_columns: TripColumns::default(),
            survey_columns: SurveyColumns::default(),
            companies: vec!["lime".into(), "ofo".into(), "spin".into()],
            genders: vec!["m".into(), "f".into(), "o".into()],
            helmet: vec!["yes".into(), "no".into()],
        }
    }
}

pub fn bike_schema(cfg: &BikeConfig, neighborhoods: &[String]) -> Result<AttributeSchema> {
    AttributeSchema::new(vec![
        Attribute::new("start_nhood", neighborhoods.iter().cloned()),
        Attribute::new("end_nhood", neighborhoods.iter().cloned()),
        Attribute::new("time_of_day", TimeOfDay::LABELS),
        Attribute::new("helmet", cfg.helmet.iter().cloned()),
        Attribute::new("company", cfg.companies.iter().cloned()),
        Attribute::new("gender", cfg.genders.iter().cloned()),
    ])
}

const COMPANY: usize = 4;
const GENDER: usize = 5;

/// Reads the survey into `rider id -> (gender, helmet)`. Rows with missing
/// fields are skipped; a repeated rider id keeps its last row.
fn read_survey<R: Read>(reader: R, cfg: &BikeConfig, warnings: &mut Vec<String>) -> Result<HashMap<String, (String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c = &cfg.survey_columns;
    let idx = [
        column_index(&headers, &c.rider_id)?,
        column_index(&headers, &c.gender)?,
        column_index(&headers, &c.helmet)?,
    ];
    let mut survey = HashMap::new();
    let mut skipped = 0usize;
    let mut repeated = 0usize;
    for record in rdr.records() {
        let Ok(record) = record else {
            skipped += 1;
            continue;
        };
        let f = idx.map(|i| record.get(i).unwrap_or("").trim());
        if f.iter().any(|s| s.is_empty()) {
            skipped += 1;
            continue;
        }
        if survey.insert(f[0].to_owned(), (f[1].to_owned(), f[2].to_owned())).is_some() {
            repeated += 1;
        }
    }
    if skipped > 0 {
        warnings.push(format!("survey: skipped {skipped} incomplete rows"));
    }
    if repeated > 0 {
        warnings.push(format!("survey: {repeated} repeated rider ids, last row kept"));
    }
    Ok(survey)
}

/// Joins trips with survey answers by rider id and aggregates. Unmatched
/// trips are dropped and counted; labels outside the configured domains are
/// filtered.
pub fn bike_preprocess<T: Read, S: Read>(
    trips: T,
    survey: S,
    cfg: &BikeConfig,
    neighborhoods: &[String],
) -> Result<IngestOutput> {
    if neighborhoods.is_empty() {
        return Err(Error::schema("neighborhood list is empty"));
    }
    let schema = Arc::new(bike_schema(cfg, neighborhoods)?);
    let mut warnings = Vec::new();
    let survey = read_survey(survey, cfg, &mut warnings)?;

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(trips);
    let headers = rdr.headers()?.clone();
    let c = &cfg.trip_columns;
    let idx = [
        column_index(&headers, &c.rider_id)?,
        column_index(&headers, &c.company)?,
        column_index(&headers, &c.start_time)?,
        column_index(&headers, &c.start_neighborhood)?,
        column_index(&headers, &c.end_neighborhood)?,
    ];

    let mut stats = IngestStats::default();
    let mut keys = Vec::new();
    for record in rdr.records() {
        stats.rows += 1;
        let Ok(record) = record else {
            stats.malformed += 1;
            continue;
        };
        let [rider, company, time, start, end] = idx.map(|i| record.get(i).unwrap_or("").trim());
        if [rider, company, time, start, end].iter().any(|s| s.is_empty()) {
            stats.missing += 1;
            continue;
        }
        let Ok(time) = parse_time_of_day(time) else {
            stats.malformed += 1;
            continue;
        };
        let Some((gender, helmet)) = survey.get(rider) else {
            stats.unmatched += 1;
            continue;
        };
        let labels = [start, end, time_bucket(time).label(), helmet.as_str(), company, gender.as_str()];
        match schema.key(&labels) {
            Ok(key) => keys.push(key),
            Err(_) => stats.filtered += 1,
        }
    }
    stats.check_malformed_ratio()?;
    stats.retained = keys.len();

    warnings.extend(constant_gender_warnings(&schema, &keys));
    let histogram = Histogram::aggregate(schema, CountMode::Integer, keys.into_iter().map(|k| (k, 1.0)))?;
    Ok(IngestOutput {
        histogram,
        stats,
        warnings,
    })
}

/// A company whose riders all report the same gender usually means the
/// field was defaulted upstream.
fn constant_gender_warnings(schema: &AttributeSchema, keys: &[BucketKey]) -> Vec<String> {
    let mut seen: BTreeMap<u32, (usize, BTreeSet<u32>)> = BTreeMap::new();
    for k in keys {
        let e = seen.entry(k.get(COMPANY)).or_default();
        e.0 += 1;
        e.1.insert(k.get(GENDER));
    }
    let attrs = schema.attributes();
    seen.into_iter()
        .filter(|(_, (trips, genders))| *trips >= 2 && genders.len() == 1)
        .map(|(company, (trips, genders))| {
            let g = *genders.first().unwrap();
            format!(
                "company {:?}: all {trips} trips report gender {:?}; the gender field may be defaulted",
                attrs[COMPANY].domain[company as usize], attrs[GENDER].domain[g as usize]
            )
        })
        .collect()
}
