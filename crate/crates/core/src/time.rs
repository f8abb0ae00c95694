//! Millisecond timestamps and UTC calendar days.
//!
//! All calendar math is done in UTC. Timestamps render as exactly 13
//! zero-padded digits so that lexicographic order of file names equals
//! chronological order.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MS_PER_DAY: u64 = 86_400_000;

/// Largest timestamp that still renders in 13 digits.
pub const MAX_TIMESTAMP_MS: u64 = 9_999_999_999_999;

/// Milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TimestampMs(u64);

impl TimestampMs {
    pub const ZERO: TimestampMs = TimestampMs(0);

    pub fn new(ms: u64) -> Result<Self> {
        if ms > MAX_TIMESTAMP_MS {
            return Err(Error::InvalidTimestamp(format!(
                "{ms} does not fit in 13 digits"
            )));
        }
        Ok(TimestampMs(ms))
    }

    /// Builds a timestamp from a signed value, rejecting negatives.
    pub fn from_signed(ms: i64) -> Result<Self> {
        if ms < 0 {
            return Err(Error::InvalidTimestamp(format!("{ms} is negative")));
        }
        Self::new(ms as u64)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, ms: u64) -> Self {
        TimestampMs(self.0.saturating_add(ms).min(MAX_TIMESTAMP_MS))
    }

    pub fn saturating_sub(self, ms: u64) -> Self {
        TimestampMs(self.0.saturating_sub(ms))
    }

    /// 13-digit zero-padded rendering used in file names.
    pub fn render(self) -> String {
        format!("{:013}", self.0)
    }

    /// Inverse of [`TimestampMs::render`]: exactly 13 ASCII digits.
    pub fn parse(s: &str) -> Result<Self> {
        if s.len() != 13 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidTimestamp(format!(
                "`{s}` is not a 13-digit millisecond timestamp"
            )));
        }
        let v: u64 = s
            .parse()
            .map_err(|_| Error::InvalidTimestamp(s.to_string()))?;
        Self::new(v)
    }

    /// Parses a file name of the form `<13 digits>.<ext>`.
    pub fn parse_file_name(name: &str) -> Result<(Self, &str)> {
        let (stem, ext) = name
            .split_once('.')
            .ok_or_else(|| Error::InvalidTimestamp(format!("`{name}` has no extension")))?;
        if ext.is_empty() || ext.contains('.') {
            return Err(Error::InvalidTimestamp(format!(
                "`{name}` is not <13-digit ts>.<ext>"
            )));
        }
        Ok((Self::parse(stem)?, ext))
    }

    /// Start of the enclosing UTC minute.
    pub fn floor_minute(self) -> Self {
        TimestampMs(self.0 - self.0 % 60_000)
    }

    pub fn day(self) -> CalendarDay {
        day_of(self)
    }
}

impl fmt::Display for TimestampMs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:013}", self.0)
    }
}

/// A UTC calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CalendarDay {
    pub year: i32,
    pub month: u32,
    pub day: u32,
}

impl CalendarDay {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(Error::InvalidArgument(format!(
                "{year:04}-{month:02}-{day:02} is not a calendar day"
            )));
        }
        if year < 1970 {
            return Err(Error::InvalidArgument(format!(
                "{year:04}-{month:02}-{day:02} predates the epoch"
            )));
        }
        Ok(CalendarDay { year, month, day })
    }

    /// Days since 1970-01-01.
    pub fn days_since_epoch(self) -> i64 {
        days_from_civil(self.year as i64, self.month, self.day)
    }

    pub fn from_days_since_epoch(days: i64) -> Self {
        let (y, m, d) = civil_from_days(days);
        CalendarDay {
            year: y as i32,
            month: m,
            day: d,
        }
    }

    /// First millisecond of the day.
    pub fn start(self) -> TimestampMs {
        TimestampMs((self.days_since_epoch() as u64) * MS_PER_DAY)
    }

    /// Last millisecond of the day (inclusive).
    pub fn end(self) -> TimestampMs {
        TimestampMs(self.start().0 + MS_PER_DAY - 1)
    }

    pub fn next(self) -> Self {
        Self::from_days_since_epoch(self.days_since_epoch() + 1)
    }

    pub fn contains(self, ts: TimestampMs) -> bool {
        self.start() <= ts && ts <= self.end()
    }

    /// `YYYY/MM` fan-out used on the cold tier.
    pub fn year_month_path(self) -> String {
        format!("{:04}/{:02}", self.year, self.month)
    }
}

impl fmt::Display for CalendarDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for CalendarDay {
    type Err = Error;

    /// Accepts `YYYY-MM-DD` and `YYYY/MM/DD`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("`{s}` is not YYYY-MM-DD or YYYY/MM/DD"));
        let sep = if s.contains('/') { '/' } else { '-' };
        let mut parts = s.split(sep);
        let (Some(y), Some(m), Some(d), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        if y.len() != 4 || m.len() != 2 || d.len() != 2 {
            return Err(bad());
        }
        let y = y.parse().map_err(|_| bad())?;
        let m = m.parse().map_err(|_| bad())?;
        let d = d.parse().map_err(|_| bad())?;
        CalendarDay::new(y, m, d)
    }
}

/// UTC calendar day containing `ts`.
pub fn day_of(ts: TimestampMs) -> CalendarDay {
    CalendarDay::from_days_since_epoch((ts.0 / MS_PER_DAY) as i64)
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

// Proleptic Gregorian conversions over 400-year eras (H. Hinnant).
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Datelike, TimeZone, Utc};
    use proptest::prelude::*;

    fn ts(ms: u64) -> TimestampMs {
        TimestampMs::new(ms).unwrap()
    }

    fn chrono_day(ms: u64) -> (i32, u32, u32) {
        let dt = Utc.timestamp_millis_opt(ms as i64).unwrap();
        (dt.year(), dt.month(), dt.day())
    }

    #[test]
    fn epoch_and_day_boundary() {
        assert_eq!(day_of(ts(0)).to_string(), "1970-01-01");
        assert_eq!(day_of(ts(86_399_999)).to_string(), "1970-01-01");
        assert_eq!(day_of(ts(86_400_000)).to_string(), "1970-01-02");
    }

    #[test]
    fn known_day_matches_chrono() {
        assert_eq!(chrono_day(1_717_171_717_171), (2024, 5, 31));
        assert_eq!(day_of(ts(1_717_171_717_171)).to_string(), "2024-05-31");
    }

    #[test]
    fn render_is_zero_padded() {
        assert_eq!(ts(0).render(), "0000000000000");
        assert_eq!(ts(1_717_171_717_171).render(), "1717171717171");
        assert!(TimestampMs::new(MAX_TIMESTAMP_MS + 1).is_err());
        assert!(TimestampMs::from_signed(-1).is_err());
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(TimestampMs::parse("123").is_err());
        assert!(TimestampMs::parse("17171717171a1").is_err());
        assert!(TimestampMs::parse_file_name("1717171717171").is_err());
        assert!(TimestampMs::parse_file_name("1717171717171.jpg.tmp").is_err());
        let (t, ext) = TimestampMs::parse_file_name("1717171717171.apc").unwrap();
        assert_eq!((t.as_millis(), ext), (1_717_171_717_171, "apc"));
    }

    #[test]
    fn calendar_day_parsing_and_bounds() {
        let d: CalendarDay = "2024/05/31".parse().unwrap();
        assert_eq!(d, "2024-05-31".parse().unwrap());
        assert_eq!(d.year_month_path(), "2024/05");
        assert!(d.contains(ts(1_717_171_717_171)));
        assert_eq!(d.next().to_string(), "2024-06-01");
        assert_eq!(d.end().as_millis() + 1, d.next().start().as_millis());
        assert!("2023-02-29".parse::<CalendarDay>().is_err());
        assert!("2024-02-29".parse::<CalendarDay>().is_ok());
        assert!("2024-5-31".parse::<CalendarDay>().is_err());
    }

    #[test]
    fn day_of_agrees_with_chrono_on_random_timestamps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let ms = rng.random_range(0..=MAX_TIMESTAMP_MS);
            let d = day_of(ts(ms));
            assert_eq!((d.year, d.month, d.day), chrono_day(ms), "ms={ms}");
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(ms in 0..=MAX_TIMESTAMP_MS) {
            let t = ts(ms);
            prop_assert_eq!(TimestampMs::parse(&t.render()).unwrap(), t);
        }

        #[test]
        fn day_round_trips_through_days(days in 0i64..115_000) {
            let d = CalendarDay::from_days_since_epoch(days);
            prop_assert_eq!(d.days_since_epoch(), days);
            prop_assert_eq!(day_of(d.start()), d);
            prop_assert_eq!(day_of(d.end()), d);
        }

        #[test]
        fn lexicographic_order_is_chronological(a in 0..=MAX_TIMESTAMP_MS, b in 0..=MAX_TIMESTAMP_MS) {
            prop_assert_eq!(ts(a).render().cmp(&ts(b).render()), a.cmp(&b));
        }
    }
}
