//! Shared primitive domain types.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary loan state: `Good` (coded 0) or `Bad` (coded 1, meaning the loan
/// has reached 60+ days past due).
///
/// Used both for a single panel observation and for a loan's terminal label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Good,
    Bad,
}

/// Failure to interpret a string as a [`Status`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expected status 0/1 or good/bad, got {0:?}")]
pub struct StatusParseError(String);

impl Status {
    /// Numeric code: 0 for good, 1 for bad.
    pub fn code(self) -> u8 {
        match self {
            Status::Good => 0,
            Status::Bad => 1,
        }
    }

    /// The code as a regression response value.
    pub fn as_f64(self) -> f64 {
        f64::from(self.code())
    }

    pub fn is_bad(self) -> bool {
        self == Status::Bad
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Status::Good),
            1 => Some(Status::Bad),
            _ => None,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Good => f.write_str("good"),
            Status::Bad => f.write_str("bad"),
        }
    }
}

impl FromStr for Status {
    type Err = StatusParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" | "good" => Ok(Status::Good),
            "1" | "bad" => Ok(Status::Bad),
            other => Err(StatusParseError(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_match_the_label_convention() {
        assert_eq!(Status::Good.code(), 0);
        assert_eq!(Status::Bad.code(), 1);
        assert_eq!(Status::Bad.as_f64(), 1.0);
    }

    #[test]
    fn parses_both_numeric_and_named_forms() {
        assert_eq!("0".parse::<Status>().unwrap(), Status::Good);
        assert_eq!("bad".parse::<Status>().unwrap(), Status::Bad);
        assert!("2".parse::<Status>().is_err());
    }

    #[test]
    fn round_trips_through_code() {
        for s in [Status::Good, Status::Bad] {
            assert_eq!(Status::from_code(s.code()), Some(s));
        }
        assert_eq!(Status::from_code(7), None);
    }
}
