//! Taxi trip records to an origin-destination histogram.
//!
//! Attributes: `o_lon, o_lat, d_lon, d_lat` (coordinates rounded to one
//! decimal), `pickup` (time of day), `dist` (trip-distance thirds), `tip`
//! (high when at least 20% of the fare) and `freq` (driver trip-count thirds).
//! Only card-paid trips carry tips, so other payment types are filtered.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tertiles::{tertiles, Tier, ValueTertiles};
use super::time::{parse_time_of_day, time_bucket, TimeOfDay};
use super::{column_index, IngestOutput, IngestStats};
use crate::error::{Error, Result};
use crate::histogram::{CountMode, Histogram};
use crate::schema::{Attribute, AttributeSchema, BucketKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaxiColumns {
    pub pickup_datetime: String,
    pub pickup_longitude: String,
    pub pickup_latitude: String,
    pub dropoff_longitude: String,
    pub dropoff_latitude: String,
    pub trip_distance: String,
    pub fare_amount: String,
    pub tip_amount: String,
    pub payment_type: String,
    pub driver_id: String,
}

impl Default for TaxiColumns {
    // January 2013 TLC trip_data joined with trip_fare
    fn default() -> Self {
        TaxiColumns {
            pickup_datetime: "pickup_datetime".into(),
            pickup_longitude: "pickup_longitude".into(),
            pickup_latitude: "pickup_latitude".into(),
            dropoff_longitude: "dropoff_longitude".into(),
            dropoff_latitude: "dropoff_latitude".into(),
            trip_distance: "trip_distance".into(),
            fare_amount: "fare_amount".into(),
            tip_amount: "tip_amount".into(),
            payment_type: "payment_type".into(),
            driver_id: "hack_license".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox {
            min_lon: -74.3,
            max_lon: -73.7,
            min_lat: 40.5,
            max_lat: 40.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaxiConfig {
    pub columns: TaxiColumns,
    pub card_payment_values: Vec<String>,
    pub bbox: BoundingBox,
}

impl Default for TaxiConfig {
    fn default() -> Self {
        TaxiConfig {
            columns: TaxiColumns::default(),
            card_payment_values: vec!["CRD".into()],
            bbox: BoundingBox::default(),
        }
    }
}

/// Coordinate in tenths of a degree, rounded half away from zero.
pub fn round_coordinate(v: f64) -> i64 {
    (v * 10.0).round() as i64
}

pub fn tenths_label(t: i64) -> String {
    let sign = if t < 0 { "-" } else { "" };
    format!("{sign}{}.{}", t.unsigned_abs() / 10, t.unsigned_abs() % 10)
}

fn tenths_range(lo: f64, hi: f64) -> std::ops::RangeInclusive<i64> {
    round_coordinate(lo)..=round_coordinate(hi)
}

fn coordinate_domain(lo: f64, hi: f64) -> Vec<String> {
    tenths_range(lo, hi).map(tenths_label).collect()
}

/// High iff tip >= 20% of fare, compared in whole cents.
pub fn tip_is_high(fare: f64, tip: f64) -> bool {
    let fare_cents = (fare * 100.0).round() as i64;
    let tip_cents = (tip * 100.0).round() as i64;
    tip_cents * 5 >= fare_cents
}

pub fn taxi_schema(cfg: &TaxiConfig) -> Result<AttributeSchema> {
    let b = &cfg.bbox;
    if !(b.min_lon <= b.max_lon && b.min_lat <= b.max_lat) {
        return Err(Error::param("bounding box minimum exceeds maximum"));
    }
    let lon = coordinate_domain(b.min_lon, b.max_lon);
    let lat = coordinate_domain(b.min_lat, b.max_lat);
    AttributeSchema::new(vec![
        Attribute::new("o_lon", lon.clone()),
        Attribute::new("o_lat", lat.clone()),
        Attribute::new("d_lon", lon),
        Attribute::new("d_lat", lat),
        Attribute::new("pickup", TimeOfDay::LABELS),
        Attribute::new("dist", Tier::LABELS),
        Attribute::new("tip", ["low", "high"]),
        Attribute::new("freq", Tier::LABELS),
    ])
}

struct Trip {
    coords: [i64; 4],
    time: TimeOfDay,
    distance: f64,
    tip_high: bool,
    driver: String,
}

enum Row {
    Trip(Trip),
    Missing,
    Malformed,
    Filtered,
}

fn parse_row(record: &csv::StringRecord, idx: &[usize; 10], cfg: &TaxiConfig) -> Row {
    let fields: Vec<&str> = idx.iter().map(|&i| record.get(i).unwrap_or("").trim()).collect();
    if fields.iter().any(|f| f.is_empty()) {
        return Row::Missing;
    }
    let [time, olon, olat, dlon, dlat, dist, fare, tip, payment, driver] = fields[..] else {
        unreachable!()
    };
    if !cfg.card_payment_values.iter().any(|v| v.eq_ignore_ascii_case(payment)) {
        return Row::Filtered;
    }
    let time = match parse_time_of_day(time) {
        Ok(t) => time_bucket(t),
        Err(_) => return Row::Malformed,
    };
    let nums: Option<Vec<f64>> = [olon, olat, dlon, dlat, dist, fare, tip]
        .iter()
        .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    let Some(nums) = nums else {
        return Row::Malformed;
    };
    let [olon, olat, dlon, dlat, distance, fare, tip] = nums[..] else {
        unreachable!()
    };
    if distance < 0.0 || tip < 0.0 {
        return Row::Malformed;
    }
    if fare <= 0.0 {
        return Row::Filtered;
    }
    let coords = [olon, olat, dlon, dlat].map(round_coordinate);
    let b = &cfg.bbox;
    let lon = tenths_range(b.min_lon, b.max_lon);
    let lat = tenths_range(b.min_lat, b.max_lat);
    if !(lon.contains(&coords[0]) && lat.contains(&coords[1]) && lon.contains(&coords[2]) && lat.contains(&coords[3])) {
        return Row::Filtered;
    }
    Row::Trip(Trip {
        coords,
        time,
        distance,
        tip_high: tip_is_high(fare, tip),
        driver: driver.to_owned(),
    })
}

/// Reads a taxi CSV and aggregates it. Rows with empty required fields are
/// dropped as missing, unparseable rows as malformed (more than half
/// malformed is an error), and non-card or out-of-box rows are filtered.
pub fn taxi_preprocess<R: Read>(reader: R, cfg: &TaxiConfig) -> Result<IngestOutput> {
    let schema = Arc::new(taxi_schema(cfg)?);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c = &cfg.columns;
    let idx = [
        column_index(&headers, &c.pickup_datetime)?,
        column_index(&headers, &c.pickup_longitude)?,
        column_index(&headers, &c.pickup_latitude)?,
        column_index(&headers, &c.dropoff_longitude)?,
        column_index(&headers, &c.dropoff_latitude)?,
        column_index(&headers, &c.trip_distance)?,
        column_index(&headers, &c.fare_amount)?,
        column_index(&headers, &c.tip_amount)?,
        column_index(&headers, &c.payment_type)?,
        column_index(&headers, &c.driver_id)?,
    ];

    let mut stats = IngestStats::default();
    let mut trips = Vec::new();
    for record in rdr.records() {
        stats.rows += 1;
        let Ok(record) = record else {
            stats.malformed += 1;
            continue;
        };
        match parse_row(&record, &idx, cfg) {
            Row::Trip(t) => trips.push(t),
            Row::Missing => stats.missing += 1,
            Row::Malformed => stats.malformed += 1,
            Row::Filtered => stats.filtered += 1,
        }
    }
    stats.check_malformed_ratio()?;
    stats.retained = trips.len();

    let distances: Vec<f64> = trips.iter().map(|t| t.distance).collect();
    let mut per_driver: BTreeMap<&str, u64> = BTreeMap::new();
    for t in &trips {
        *per_driver.entry(t.driver.as_str()).or_default() += 1;
    }
    let driver_tier = tertiles(per_driver);
    let histogram = match ValueTertiles::from_values(&distances) {
        None => Histogram::empty(schema, CountMode::Integer),
        Some(cuts) => {
            let lon0 = *tenths_range(cfg.bbox.min_lon, cfg.bbox.max_lon).start();
            let lat0 = *tenths_range(cfg.bbox.min_lat, cfg.bbox.max_lat).start();
            let entries = trips.iter().map(|t| {
                let key = BucketKey::from(vec![
                    (t.coords[0] - lon0) as u32,
                    (t.coords[1] - lat0) as u32,
                    (t.coords[2] - lon0) as u32,
                    (t.coords[3] - lat0) as u32,
                    t.time as u32,
                    cuts.classify(t.distance) as u32,
                    u32::from(t.tip_high),
                    driver_tier[t.driver.as_str()] as u32,
                ]);
                (key, 1.0)
            });
            Histogram::aggregate(schema, CountMode::Integer, entries)?
        }
    };
    Ok(IngestOutput {
        histogram,
        stats,
        warnings: Vec::new(),
    })
}
