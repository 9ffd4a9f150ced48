//! Calendar month handling and the timestamp wire formats used across the
//! store file and report outputs.
//!
//! Observation timestamps are kept at minute precision and rendered as
//! `YYYY-MM-DDTHH:MMZ`; ingestion timestamps keep seconds
//! (`YYYY-MM-DDTHH:MM:SSZ`). All timestamps are UTC.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Timelike, Utc};
use thiserror::Error;

pub const OBSERVED_AT_FORMAT: &str = "%Y-%m-%dT%H:%MZ";
pub const INGESTED_AT_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeParseError {
    #[error("invalid month {0:?}, expected YYYY-MM with month 01-12")]
    InvalidMonth(String),
    #[error("invalid timestamp {0:?}: {1}")]
    InvalidTimestamp(String, String),
}

/// One calendar month (UTC), e.g. `2018-02`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Month> {
        if (1..=12).contains(&month) {
            Some(Month { year, month })
        } else {
            None
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    /// Number of days in this month, leap years included.
    pub fn day_count(&self) -> u32 {
        let first = NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month");
        let next = if self.month == 12 {
            NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(self.year, self.month + 1, 1)
        }
        .expect("valid month");
        next.signed_duration_since(first).num_days() as u32
    }

    pub fn date(&self, day: u32) -> Option<NaiveDate> {
        if day >= 1 && day <= self.day_count() {
            NaiveDate::from_ymd_opt(self.year, self.month, day)
        } else {
            None
        }
    }

    /// First instant of the month.
    pub fn start(&self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0)
            .single()
            .expect("valid month start")
    }

    /// First instant of the following month.
    pub fn end_exclusive(&self) -> DateTime<Utc> {
        let (y, m) = if self.month == 12 {
            (self.year + 1, 1)
        } else {
            (self.year, self.month + 1)
        };
        Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0)
            .single()
            .expect("valid month end")
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.start() && ts < self.end_exclusive()
    }

    pub fn of(ts: DateTime<Utc>) -> Month {
        Month {
            year: ts.year(),
            month: ts.month(),
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = TimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TimeParseError::InvalidMonth(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        Month::new(year, month).ok_or_else(bad)
    }
}

/// Drops seconds and sub-second precision.
pub fn truncate_to_minute(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.with_second(0)
        .and_then(|t| t.with_nanosecond(0))
        .expect("truncation cannot fail")
}

/// Drops sub-second precision.
pub fn truncate_to_second(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.with_nanosecond(0).expect("truncation cannot fail")
}

pub fn format_observed_at(ts: DateTime<Utc>) -> String {
    ts.format(OBSERVED_AT_FORMAT).to_string()
}

pub fn format_ingested_at(ts: DateTime<Utc>) -> String {
    ts.format(INGESTED_AT_FORMAT).to_string()
}

pub fn parse_observed_at(s: &str) -> Result<DateTime<Utc>, TimeParseError> {
    chrono::NaiveDateTime::parse_from_str(s, OBSERVED_AT_FORMAT)
        .map(|n| n.and_utc())
        .map_err(|e| TimeParseError::InvalidTimestamp(s.to_string(), e.to_string()))
}

pub fn parse_ingested_at(s: &str) -> Result<DateTime<Utc>, TimeParseError> {
    chrono::NaiveDateTime::parse_from_str(s, INGESTED_AT_FORMAT)
        .map(|n| n.and_utc())
        .map_err(|e| TimeParseError::InvalidTimestamp(s.to_string(), e.to_string()))
}
