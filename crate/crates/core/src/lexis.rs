//! Calendar dates and sampling frames on the Lexis diagram.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::record::{Interval, TruncationSet};

pub const DAYS_PER_YEAR: f64 = 365.25;

pub fn years_to_days(y: f64) -> f64 {
    y * DAYS_PER_YEAR
}

pub fn days_to_years(d: f64) -> f64 {
    d / DAYS_PER_YEAR
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1800, 1, 1).expect("valid epoch")
}

/// Proleptic Gregorian date stored as whole days since 1800-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CalendarDate {
    days_since_epoch: i64,
}

impl CalendarDate {
    pub fn from_days(days_since_epoch: i64) -> Self {
        CalendarDate { days_since_epoch }
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self> {
        let d = NaiveDate::from_ymd_opt(year, month, day)
            .ok_or_else(|| Error::input(format!("invalid date {year:04}-{month:02}-{day:02}")))?;
        Ok(Self::from_naive(d))
    }

    fn from_naive(d: NaiveDate) -> Self {
        CalendarDate { days_since_epoch: (d - epoch()).num_days() }
    }

    fn to_naive(self) -> NaiveDate {
        epoch() + chrono::Duration::days(self.days_since_epoch)
    }

    pub fn days_since_epoch(self) -> i64 {
        self.days_since_epoch
    }

    pub fn year(self) -> i32 {
        self.to_naive().year()
    }

    pub fn add_days(self, days: i64) -> Self {
        CalendarDate { days_since_epoch: self.days_since_epoch + days }
    }

    /// Adds whole calendar years; 29 February maps to 28 February when the
    /// target year is not a leap year.
    pub fn add_years(self, years: u32) -> Self {
        let d = self
            .to_naive()
            .checked_add_months(Months::new(12 * years))
            .expect("date within chrono range");
        Self::from_naive(d)
    }

    /// Adds an age in years: whole years by calendar arithmetic, any
    /// fractional remainder at 365.25 days per year.
    pub fn add_age(self, years: f64) -> Self {
        let whole = years.floor();
        let frac_days = ((years - whole) * DAYS_PER_YEAR).round() as i64;
        self.add_years(whole as u32).add_days(frac_days)
    }

    /// `self - other` in days.
    pub fn days_after(self, other: CalendarDate) -> i64 {
        self.days_since_epoch - other.days_since_epoch
    }
}

impl fmt::Display for CalendarDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

impl FromStr for CalendarDate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map(Self::from_naive)
            .map_err(|e| Error::input(format!("malformed date '{s}': {e}")))
    }
}

impl Serialize for CalendarDate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CalendarDate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// Deaths between `c1` and `c2` only.
    IntervalTruncated,
    /// Survivors observed from `c1`, censored at `c2`.
    LeftTruncRightCens,
    /// Deaths in `[105, 110)` between `d1` and `d2`, and deaths above 110
    /// between `c1` and `c2`.
    IdlDual,
}

fn default_u0() -> f64 {
    105.0
}

/// Calendar windows defining which trajectories are observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingFrame {
    pub kind: FrameKind,
    pub c1: CalendarDate,
    pub c2: CalendarDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<CalendarDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<CalendarDate>,
    /// Age (years) at which excess lifetimes start.
    #[serde(default = "default_u0")]
    pub u0: f64,
}

impl SamplingFrame {
    pub fn single(kind: FrameKind, c1: CalendarDate, c2: CalendarDate, u0: f64) -> Result<Self> {
        let f = SamplingFrame { kind, c1, c2, d1: None, d2: None, u0 };
        f.validate()?;
        Ok(f)
    }

    pub fn idl(c1: CalendarDate, c2: CalendarDate, d1: CalendarDate, d2: CalendarDate) -> Result<Self> {
        let f = SamplingFrame { kind: FrameKind::IdlDual, c1, c2, d1: Some(d1), d2: Some(d2), u0: 105.0 };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c1 >= self.c2 {
            return Err(Error::input(format!("frame window c1={} must precede c2={}", self.c1, self.c2)));
        }
        if !(self.u0 >= 0.0) || !self.u0.is_finite() {
            return Err(Error::input(format!("frame threshold age {} invalid", self.u0)));
        }
        if self.kind == FrameKind::IdlDual {
            let (d1, d2) = match (self.d1, self.d2) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::input("dual frame requires d1 and d2")),
            };
            if d1 >= d2 {
                return Err(Error::input(format!("frame window d1={d1} must precede d2={d2}")));
            }
            if self.c2 <= d1 {
                return Err(Error::input("dual frame requires c2 > d1"));
            }
        }
        Ok(())
    }
}

/// Excess-lifetime window in days, `[max(0, c1 - x), c2 - x]`, for an
/// individual reaching the threshold age on date `x`. For left-truncated,
/// right-censored frames the upper bound is a censoring time.
pub fn excess_interval(x: CalendarDate, frame: &SamplingFrame) -> Result<(f64, f64)> {
    if frame.kind == FrameKind::IdlDual {
        return Err(Error::input("dual frames have two windows; use idl_observable_set"));
    }
    if x >= frame.c2 {
        return Err(Error::domain(format!(
            "trajectory cannot intersect observation region: entry {x} is not before {}",
            frame.c2
        )));
    }
    let a = (frame.c1.days_after(x)).max(0) as f64;
    let b = frame.c2.days_after(x) as f64;
    Ok((a, b))
}

/// Excess ages (days above 105) at which a death would be recorded in a
/// dual-window frame, for an individual turning 105 on `x105`. Deaths before
/// the 110th birthday count if they fall in `[d1, d2]`; later deaths if they
/// fall in `[c1, c2]`. Empty when the trajectory misses both regions.
pub fn idl_observable_set(x105: CalendarDate, frame: &SamplingFrame) -> Result<TruncationSet> {
    let (d1, d2) = match (frame.kind, frame.d1, frame.d2) {
        (FrameKind::IdlDual, Some(a), Some(b)) => (a, b),
        _ => return Err(Error::input("idl_observable_set requires a dual frame")),
    };
    let s110 = x105.add_years(5).days_after(x105) as f64;
    let semi = Interval::new(d1.days_after(x105) as f64, d2.days_after(x105) as f64);
    let super_ = Interval::new(frame.c1.days_after(x105) as f64, frame.c2.days_after(x105) as f64);
    let mut parts = Vec::new();
    let (lo, hi) = (semi.lower.max(0.0), semi.upper.min(s110));
    if hi >= lo {
        parts.push(Interval::new(lo, hi));
    }
    let (lo, hi) = (super_.lower.max(s110), super_.upper);
    if hi >= lo {
        parts.push(Interval::new(lo, hi));
    }
    Ok(TruncationSet::new(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> CalendarDate {
        s.parse().unwrap()
    }

    #[test]
    fn dates_round_trip_and_order() {
        let x = d("1910-03-01");
        assert_eq!(x.to_string(), "1910-03-01");
        assert!(d("1910-02-28") < x);
        assert_eq!(d("1800-01-01").days_since_epoch(), 0);
        assert_eq!(d("2000-02-29").add_years(1), d("2001-02-28"));
        assert!("2001-02-29".parse::<CalendarDate>().is_err());
    }

    #[test]
    fn excess_interval_examples() {
        let c1 = d("2000-01-01");
        let c2 = c1.add_days(3653);
        let f = SamplingFrame::single(FrameKind::IntervalTruncated, c1, c2, 105.0).unwrap();
        let x = c1.add_days(-730);
        assert_eq!(excess_interval(x, &f).unwrap(), (730.0, 4383.0));
        assert_eq!(excess_interval(c1, &f).unwrap(), (0.0, 3653.0));
        assert!(excess_interval(c2, &f).is_err());
    }

    #[test]
    fn french_1910_cohort_cannot_reach_108() {
        let c2 = d("2017-12-31");
        let f = SamplingFrame::single(FrameKind::IntervalTruncated, d("1987-01-01"), c2, 105.0).unwrap();
        for birth in [d("1910-01-01"), d("1910-07-01"), d("1910-12-31")] {
            let x = birth.add_years(105);
            let (_, b) = excess_interval(x, &f).unwrap();
            let max_age = 105.0 + days_to_years(b);
            assert!(max_age < 108.0 && max_age > 107.0, "{max_age}");
        }
    }
}
