//! Minute-resolution timestamps.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MINUTES_PER_HOUR: i64 = 60;
pub const MINUTES_PER_DAY: i64 = 24 * MINUTES_PER_HOUR;

/// Absolute time as whole minutes since 1970-01-01T00:00 (naive clock, no zone).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

/// Signed span of whole minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Minutes(pub i64);

impl Minutes {
    pub const fn hours(h: i64) -> Self {
        Minutes(h * MINUTES_PER_HOUR)
    }

    pub const fn days(d: i64) -> Self {
        Minutes(d * MINUTES_PER_DAY)
    }

    pub fn as_hours(self) -> f64 {
        self.0 as f64 / MINUTES_PER_HOUR as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp {0:?}")]
pub struct TimestampError(pub String);

impl Timestamp {
    pub const fn from_minutes(m: i64) -> Self {
        Timestamp(m)
    }

    pub const fn minutes(self) -> i64 {
        self.0
    }

    pub fn from_ymd_hm(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(y, mo, d)?;
        let time = NaiveTime::from_hms_opt(h, mi, 0)?;
        Some(Self::from_naive(date.and_time(time)))
    }

    fn from_naive(dt: NaiveDateTime) -> Self {
        Timestamp(dt.and_utc().timestamp().div_euclid(60))
    }

    fn to_naive(self) -> NaiveDateTime {
        DateTime::from_timestamp(self.0 * 60, 0)
            .expect("timestamp within chrono range")
            .naive_utc()
    }

    /// Accepts `YYYY-MM-DDTHH:MM[:SS]` with an optional `Z` or numeric offset,
    /// or a bare date. Seconds are truncated; offsets are folded into the naive clock.
    pub fn parse(s: &str) -> Result<Self, TimestampError> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Self::from_naive(dt.naive_utc()));
        }
        for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s.trim_end_matches('Z'), fmt) {
                return Ok(Self::from_naive(dt));
            }
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(Self::from_naive(d.and_time(NaiveTime::MIN)));
        }
        Err(TimestampError(s.to_string()))
    }

    /// Minutes past midnight on this timestamp's day.
    pub fn minute_of_day(self) -> i64 {
        self.0.rem_euclid(MINUTES_PER_DAY)
    }

    /// Start of the day containing this timestamp.
    pub fn floor_day(self) -> Self {
        Timestamp(self.0 - self.minute_of_day())
    }

    pub fn hours_since(self, earlier: Timestamp) -> f64 {
        (self - earlier).as_hours()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%dT%H:%M"))
    }
}

impl Add<Minutes> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Minutes) -> Timestamp {
        Timestamp(self.0 + rhs.0)
    }
}

impl Sub<Minutes> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: Minutes) -> Timestamp {
        Timestamp(self.0 - rhs.0)
    }
}

impl Sub for Timestamp {
    type Output = Minutes;
    fn sub(self, rhs: Timestamp) -> Minutes {
        Minutes(self.0 - rhs.0)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}
