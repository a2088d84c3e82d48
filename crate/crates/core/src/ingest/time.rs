use chrono::{NaiveDateTime, NaiveTime, Timelike};

use crate::error::{Error, Result};

/// Four-way split of the day. Intervals are half-open:
/// morning [05:00, 09:00), day [09:00, 15:00), evening [15:00, 19:00),
/// night [19:00, 05:00).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeOfDay {
    Morning,
    Day,
    Evening,
    Night,
}

impl TimeOfDay {
    pub const LABELS: [&'static str; 4] = ["morning", "day", "evening", "night"];

    pub fn label(self) -> &'static str {
        Self::LABELS[self as usize]
    }
}

pub fn time_bucket(time: NaiveTime) -> TimeOfDay {
    match time.hour() {
        5..=8 => TimeOfDay::Morning,
        9..=14 => TimeOfDay::Day,
        15..=18 => TimeOfDay::Evening,
        _ => TimeOfDay::Night,
    }
}

const DATETIME_FORMATS: [&str; 4] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%m/%d/%Y %H:%M:%S"];
const TIME_FORMATS: [&str; 2] = ["%H:%M:%S", "%H:%M"];

/// Parses a local timestamp (`2013-01-01 15:11:48` and similar) or a bare
/// time of day (`06:30`). No timezone conversion is applied.
pub fn parse_time_of_day(raw: &str) -> Result<NaiveTime> {
    let raw = raw.trim();
    DATETIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok().map(|dt| dt.time()))
        .or_else(|| TIME_FORMATS.iter().find_map(|f| NaiveTime::parse_from_str(raw, f).ok()))
        .ok_or_else(|| Error::Malformed(format!("unparseable time `{raw}`")))
}
