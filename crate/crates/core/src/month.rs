//! Calendar-month arithmetic.
//!
//! Every date in the pipeline is month-granular: performance rows, macro
//! observations, panel snapshots. `CalMonth` stores a month as a flat count
//! of months since January of year 0, so gap detection, censoring windows,
//! and lag arithmetic are plain integer operations.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A calendar month such as `2020-04`, with no day-of-month component.
///
/// Ordered chronologically. Serialized as a `"YYYY-MM"` string.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CalMonth(i32);

/// Failure to interpret a string as a calendar month.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonthParseError {
    #[error("expected YYYY-MM or YYYY-MM-DD, got {0:?}")]
    Format(String),
    #[error("month component out of range 1-12 in {0:?}")]
    MonthRange(String),
}

impl CalMonth {
    /// Builds a month from a year and a 1-based month-of-year.
    ///
    /// Panics if `month` is not in `1..=12`; use [`FromStr`] for fallible
    /// parsing of untrusted input.
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month-of-year {month} out of range");
        CalMonth(year * 12 + (month as i32 - 1))
    }

    /// The flat month index backing this value (months since 0000-01).
    pub fn index(self) -> i32 {
        self.0
    }

    /// Rebuilds a month from [`CalMonth::index`].
    pub fn from_index(index: i32) -> Self {
        CalMonth(index)
    }

    /// Calendar year.
    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// Month of year, `1..=12`.
    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    /// Calendar quarter, `1..=4`.
    pub fn quarter(self) -> u32 {
        (self.month() - 1) / 3 + 1
    }

    /// Signed number of months from `earlier` to `self`.
    pub fn months_since(self, earlier: CalMonth) -> i32 {
        self.0 - earlier.0
    }
}

impl Add<i32> for CalMonth {
    type Output = CalMonth;

    fn add(self, months: i32) -> CalMonth {
        CalMonth(self.0 + months)
    }
}

impl Sub<i32> for CalMonth {
    type Output = CalMonth;

    fn sub(self, months: i32) -> CalMonth {
        CalMonth(self.0 - months)
    }
}

impl Sub<CalMonth> for CalMonth {
    type Output = i32;

    fn sub(self, other: CalMonth) -> i32 {
        self.months_since(other)
    }
}

impl fmt::Display for CalMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl fmt::Debug for CalMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CalMonth({self})")
    }
}

impl FromStr for CalMonth {
    type Err = MonthParseError;

    /// Accepts `YYYY-MM` or `YYYY-MM-DD`; any day-of-month is discarded.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MonthParseError::Format(s.to_string());
        let mut parts = s.split('-');
        let year: i32 =
            parts.next().filter(|y| !y.is_empty()).and_then(|y| y.parse().ok()).ok_or_else(bad)?;
        let month: u32 =
            parts.next().filter(|m| m.len() == 2).and_then(|m| m.parse().ok()).ok_or_else(bad)?;
        match parts.next() {
            None => {}
            Some(day) if day.len() == 2 && day.parse::<u32>().is_ok() => {
                if parts.next().is_some() {
                    return Err(bad());
                }
            }
            Some(_) => return Err(bad()),
        }
        if !(1..=12).contains(&month) {
            return Err(MonthParseError::MonthRange(s.to_string()));
        }
        Ok(CalMonth::new(year, month))
    }
}

impl TryFrom<String> for CalMonth {
    type Error = MonthParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CalMonth> for String {
    fn from(m: CalMonth) -> String {
        m.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_year_month_form() {
        let m: CalMonth = "2020-04".parse().expect("valid month");
        assert_eq!(m.year(), 2020);
        assert_eq!(m.month(), 4);
    }

    #[test]
    fn parses_full_date_form_and_drops_the_day() {
        let m: CalMonth = "2018-02-17".parse().expect("valid date");
        assert_eq!(m, CalMonth::new(2018, 2));
    }

    #[test]
    fn rejects_malformed_strings() {
        for s in ["", "2020", "2020-13", "2020-00", "2020-4", "20-04-01-02", "abcd-ef"] {
            assert!(s.parse::<CalMonth>().is_err(), "{s:?} should not parse");
        }
    }

    #[test]
    fn display_round_trips_through_parse() {
        let m = CalMonth::new(2021, 9);
        let shown = m.to_string();
        assert_eq!(shown, "2021-09");
        assert_eq!(shown.parse::<CalMonth>().unwrap(), m);
    }

    #[test]
    fn month_arithmetic_crosses_year_boundaries() {
        let m = CalMonth::new(2020, 11);
        assert_eq!(m + 3, CalMonth::new(2021, 2));
        assert_eq!(m - 12, CalMonth::new(2019, 11));
        assert_eq!(CalMonth::new(2021, 2) - m, 3);
    }

    #[test]
    fn quarters_partition_the_year() {
        let quarters: Vec<u32> = (1..=12).map(|mm| CalMonth::new(2022, mm).quarter()).collect();
        assert_eq!(quarters, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
    }

    #[test]
    fn ordering_is_chronological() {
        assert!(CalMonth::new(2019, 12) < CalMonth::new(2020, 1));
        assert!(CalMonth::new(2020, 1) < CalMonth::new(2020, 2));
    }

    #[test]
    fn serde_round_trips_as_string() {
        let m = CalMonth::new(2020, 4);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "\"2020-04\"");
        let back: CalMonth = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
