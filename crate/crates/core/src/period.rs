//! Calendar periods: quarters and years.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A calendar quarter, ordered chronologically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self, Error> {
        if !(1..=4).contains(&q) {
            return Err(Error::invalid(format!("quarter {q} outside 1..=4")));
        }
        Ok(Self { year, q })
    }

    /// Quarters since year 0 Q1.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(4) as i32,
            q: (ord.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn offset(self, k: i64) -> Self {
        Self::from_ordinal(self.ordinal() + k)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    /// Inclusive count of quarters from `self` to `end`; zero if `end < self`.
    pub fn count_to(self, end: Quarter) -> usize {
        (end.ordinal() - self.ordinal() + 1).max(0) as usize
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    /// Accepts `1975Q2`, `1975-Q2`, `1975:2`, `1975 Q2` and `1975-04-01`-style month dates.
    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        let bad = || Error::invalid(format!("unrecognized quarter `{s}`"));
        let upper = t.to_ascii_uppercase();
        if let Some(pos) = upper.find('Q') {
            let year: i32 = upper[..pos]
                .trim_end_matches(['-', ' ', ':'])
                .parse()
                .map_err(|_| bad())?;
            let q: u8 = upper[pos + 1..].trim().parse().map_err(|_| bad())?;
            return Quarter::new(year, q);
        }
        if let Some((y, q)) = t.split_once(':') {
            let year: i32 = y.parse().map_err(|_| bad())?;
            let q: u8 = q.parse().map_err(|_| bad())?;
            return Quarter::new(year, q);
        }
        let parts: Vec<&str> = t.split('-').collect();
        if parts.len() >= 2 {
            let year: i32 = parts[0].parse().map_err(|_| bad())?;
            let month: u8 = parts[1].parse().map_err(|_| bad())?;
            if !(1..=12).contains(&month) {
                return Err(bad());
            }
            return Quarter::new(year, (month - 1) / 3 + 1);
        }
        Err(bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Observation period of a raw series: annual or quarterly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Year(i32),
    Quarter(Quarter),
}

impl Period {
    pub fn as_quarter(self) -> Option<Quarter> {
        match self {
            Period::Quarter(q) => Some(q),
            Period::Year(_) => None,
        }
    }

    pub fn year(self) -> i32 {
        match self {
            Period::Year(y) => y,
            Period::Quarter(q) => q.year,
        }
    }

    /// Successor at the same frequency.
    pub fn next(self) -> Period {
        match self {
            Period::Year(y) => Period::Year(y + 1),
            Period::Quarter(q) => Period::Quarter(q.next()),
        }
    }

    /// Sort key comparable across frequencies (quarter ordinal; years map to Q1).
    pub fn key(self) -> i64 {
        match self {
            Period::Year(y) => y as i64 * 4,
            Period::Quarter(q) => q.ordinal(),
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Year(y) => write!(f, "{y}"),
            Period::Quarter(q) => write!(f, "{q}"),
        }
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        if !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '-') && !t[1..].contains('-') {
            return t
                .parse::<i32>()
                .map(Period::Year)
                .map_err(|_| Error::invalid(format!("unrecognized period `{s}`")));
        }
        t.parse::<Quarter>().map(Period::Quarter)
    }
}
