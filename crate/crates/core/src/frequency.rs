//! Frequency tokens and the mapping from ISO-8601 timestamps to integer
//! period indices.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrequencyError {
    #[error("unknown frequency token `{0}` (supported: T, 5T, 10T, 15T, 30T, H, D, W, M, Q, Y)")]
    UnknownFrequency(String),
    #[error("cannot parse timestamp `{0}` as ISO-8601")]
    BadTimestamp(String),
}

/// Sampling frequency of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frequency {
    /// Fixed-width minute buckets: 1, 5, 10, 15 or 30 minutes.
    Minutes(u32),
    Hourly,
    Daily,
    Weekly,
    Monthly,
    Quarterly,
    Yearly,
}

impl Frequency {
    pub const ALL: [Frequency; 11] = [
        Frequency::Minutes(1),
        Frequency::Minutes(5),
        Frequency::Minutes(10),
        Frequency::Minutes(15),
        Frequency::Minutes(30),
        Frequency::Hourly,
        Frequency::Daily,
        Frequency::Weekly,
        Frequency::Monthly,
        Frequency::Quarterly,
        Frequency::Yearly,
    ];

    pub fn token(&self) -> String {
        match self {
            Frequency::Minutes(1) => "T".to_string(),
            Frequency::Minutes(k) => format!("{k}T"),
            Frequency::Hourly => "H".to_string(),
            Frequency::Daily => "D".to_string(),
            Frequency::Weekly => "W".to_string(),
            Frequency::Monthly => "M".to_string(),
            Frequency::Quarterly => "Q".to_string(),
            Frequency::Yearly => "Y".to_string(),
        }
    }

    /// Seasonal period of the dominant cycle at this frequency.
    pub fn default_seasonality(&self) -> usize {
        match self {
            Frequency::Minutes(k) => (1440 / k) as usize,
            Frequency::Hourly => 24,
            Frequency::Daily => 7,
            Frequency::Weekly => 1,
            Frequency::Monthly => 12,
            Frequency::Quarterly => 4,
            Frequency::Yearly => 1,
        }
    }

    fn fixed_seconds(&self) -> Option<i64> {
        match self {
            Frequency::Minutes(k) => Some(60 * i64::from(*k)),
            Frequency::Hourly => Some(3_600),
            Frequency::Daily => Some(86_400),
            Frequency::Weekly => Some(604_800),
            _ => None,
        }
    }

    /// Maps a timestamp to its period index at this frequency.
    ///
    /// Returns `(index, phase)`. For fixed-width frequencies `phase` is the
    /// offset in seconds inside the period; regularly spaced series keep a
    /// constant phase. Calendar frequencies always report phase 0 so that
    /// month-end stamps of unequal day count still line up.
    pub fn period_index(&self, ts: &NaiveDateTime) -> (i64, i64) {
        if let Some(width) = self.fixed_seconds() {
            let secs = ts.and_utc().timestamp();
            return (secs.div_euclid(width), secs.rem_euclid(width));
        }
        let year = i64::from(ts.year());
        let month0 = i64::from(ts.month0());
        let index = match self {
            Frequency::Monthly => year * 12 + month0,
            Frequency::Quarterly => year * 4 + month0 / 3,
            Frequency::Yearly => year,
            _ => unreachable!("fixed-width frequencies handled above"),
        };
        (index, 0)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

impl FromStr for Frequency {
    type Err = FrequencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "T" | "1T" => Frequency::Minutes(1),
            "5T" => Frequency::Minutes(5),
            "10T" => Frequency::Minutes(10),
            "15T" => Frequency::Minutes(15),
            "30T" => Frequency::Minutes(30),
            "H" => Frequency::Hourly,
            "D" => Frequency::Daily,
            "W" => Frequency::Weekly,
            "M" => Frequency::Monthly,
            "Q" => Frequency::Quarterly,
            "Y" => Frequency::Yearly,
            other => return Err(FrequencyError::UnknownFrequency(other.to_string())),
        })
    }
}

impl Serialize for Frequency {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.token())
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let token = String::deserialize(deserializer)?;
        token.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses the ISO-8601 forms found in dataset files: RFC 3339 with offset
/// (converted to UTC), naive date-times with `T` or space separator, plain
/// dates and `YYYY-MM`.
pub fn parse_timestamp(raw: &str) -> Result<NaiveDateTime, FrequencyError> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight is valid"));
    }
    if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight is valid"));
    }
    Err(FrequencyError::BadTimestamp(raw.to_string()))
}
