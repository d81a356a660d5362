//! Lifetime records: one individual's (possibly coarsened) excess lifetime
//! together with the set of excess times at which it could have been
//! sampled. All times are in years above the record's origin age.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexis::CalendarDate;

/// Serializes infinite values as JSON `null` and reads `null` back as `+inf`.
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Closed interval `[lower, upper]`; `upper` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    #[serde(with = "inf_as_null")]
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower && t <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Union of disjoint intervals, kept sorted and merged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TruncationSet {
    intervals: Vec<Interval>,
}

impl TruncationSet {
    pub fn new(intervals: impl IntoIterator<Item = Interval>) -> Self {
        let mut v: Vec<Interval> = intervals
            .into_iter()
            .filter(|i| i.upper > i.lower && !i.lower.is_nan() && !i.upper.is_nan())
            .collect();
        v.sort_by(|a, b| a.lower.total_cmp(&b.lower));
        let mut merged: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match merged.last_mut() {
                Some(last) if iv.lower <= last.upper => last.upper = last.upper.max(iv.upper),
                _ => merged.push(iv),
            }
        }
        TruncationSet { intervals: merged }
    }

    /// `[0, inf)`: no truncation.
    pub fn full() -> Self {
        Self::single(0.0, f64::INFINITY)
    }

    pub fn single(lower: f64, upper: f64) -> Self {
        Self::new([Interval::new(lower, upper)])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(t))
    }

    pub fn lower(&self) -> f64 {
        self.intervals.first().map_or(f64::NAN, |i| i.lower)
    }

    pub fn upper(&self) -> f64 {
        self.intervals.last().map_or(f64::NAN, |i| i.upper)
    }

    pub fn is_unbounded_above(&self) -> bool {
        self.upper() == f64::INFINITY
    }

    pub fn intersect(&self, other: &TruncationSet) -> TruncationSet {
        let mut out = Vec::new();
        for a in &self.intervals {
            for b in &other.intervals {
                let lo = a.lower.max(b.lower);
                let hi = a.upper.min(b.upper);
                if hi > lo {
                    out.push(Interval::new(lo, hi));
                }
            }
        }
        TruncationSet::new(out)
    }

    pub fn intersect_interval(&self, lower: f64, upper: f64) -> TruncationSet {
        self.intersect(&TruncationSet::single(lower, upper))
    }

    pub fn shift(&self, by: f64) -> TruncationSet {
        TruncationSet::new(self.intervals.iter().map(|i| Interval::new(i.lower + by, i.upper + by)))
    }

    pub fn scale(&self, by: f64) -> TruncationSet {
        TruncationSet::new(self.intervals.iter().map(|i| Interval::new(i.lower * by, i.upper * by)))
    }
}

/// What is known about the event time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Observed { time: f64 },
    /// Alive at `time`; the event lies beyond it.
    RightCensored { time: f64 },
    /// Event in `[lower, upper)`.
    IntervalCensored {
        lower: f64,
        #[serde(with = "inf_as_null")]
        upper: f64,
    },
}

impl Event {
    /// The event region as a set of excess times (observed events give a
    /// degenerate set and are handled separately by the likelihood).
    pub fn region(&self) -> TruncationSet {
        match *self {
            Event::Observed { time } => TruncationSet { intervals: vec![Interval::new(time, time)] },
            Event::RightCensored { time } => TruncationSet::single(time, f64::INFINITY),
            Event::IntervalCensored { lower, upper } => TruncationSet::single(lower, upper),
        }
    }

    pub fn is_observed(&self) -> bool {
        matches!(self, Event::Observed { .. })
    }

    /// Smallest upper support endpoint compatible with this event.
    pub fn support_floor(&self) -> f64 {
        match *self {
            Event::Observed { time } | Event::RightCensored { time } => time,
            Event::IntervalCensored { lower, .. } => lower,
        }
    }

    fn scaled(&self, c: f64) -> Event {
        match *self {
            Event::Observed { time } => Event::Observed { time: time * c },
            Event::RightCensored { time } => Event::RightCensored { time: time * c },
            Event::IntervalCensored { lower, upper } => Event::IntervalCensored { lower: lower * c, upper: upper * c },
        }
    }
}

/// Result of re-expressing a record relative to a higher threshold.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdOutcome {
    Kept(LifetimeRecord),
    /// Event exactly at the threshold; excluded and counted.
    Tie,
    /// Not known to exceed the threshold, or not observable above it.
    Below,
}

/// One individual's excess lifetime above `origin_age` (years) with its
/// truncation and censoring metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRecord {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub origin_age: f64,
    pub event: Event,
    /// Excess times for which the individual would have entered the sample.
    pub truncation: TruncationSet,
    /// Administrative censoring time (left-truncated, right-censored
    /// schemes): deaths after it are recorded as censored at it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censor_at: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_date: Option<CalendarDate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariates: BTreeMap<String, String>,
}

const TIE_TOL: f64 = 1e-9;

impl LifetimeRecord {
    pub fn new(event: Event, truncation: TruncationSet) -> Self {
        LifetimeRecord {
            id: String::new(),
            origin_age: 0.0,
            event,
            truncation,
            censor_at: None,
            entry_date: None,
            covariates: BTreeMap::new(),
        }
    }

    /// Observed death at `t`, sampled only if the death falls in `[a, b]`.
    pub fn interval_truncated(t: f64, a: f64, b: f64) -> Self {
        Self::new(Event::Observed { time: t }, TruncationSet::single(a, b))
    }

    /// Left-truncated at `a`, administratively censored at `c`. Deaths at
    /// `t <= c` are observed; otherwise the record is censored at `c`.
    pub fn left_truncated(t: f64, a: f64, c: f64) -> Self {
        let event = if t <= c { Event::Observed { time: t } } else { Event::RightCensored { time: c } };
        let mut r = Self::new(event, TruncationSet::single(a, f64::INFINITY));
        r.censor_at = Some(c);
        r
    }

    pub fn untruncated(t: f64) -> Self {
        Self::new(Event::Observed { time: t }, TruncationSet::full())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_origin(mut self, origin_age: f64) -> Self {
        self.origin_age = origin_age;
        self
    }

    pub fn with_covariate(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.covariates.insert(key.into(), value.into());
        self
    }

    fn label(&self) -> String {
        if self.id.is_empty() {
            "<unnamed>".to_string()
        } else {
            self.id.clone()
        }
    }

    /// Checks the record invariants.
    pub fn validate(&self) -> Result<()> {
        let who = self.label();
        if self.truncation.is_empty() {
            return Err(Error::input(format!("record {who}: empty truncation set")));
        }
        for iv in self.truncation.intervals() {
            if !(iv.lower >= 0.0) || !iv.lower.is_finite() {
                return Err(Error::input(format!("record {who}: truncation bound {} invalid", iv.lower)));
            }
        }
        match self.event {
            Event::Observed { time } => {
                if !(time >= 0.0) || !time.is_finite() {
                    return Err(Error::input(format!("record {who}: lifetime {time} must be finite and nonnegative")));
                }
                if !self.truncation.contains(time) {
                    return Err(Error::input(format!("record {who}: lifetime {time} outside its truncation set")));
                }
            }
            Event::RightCensored { time } => {
                if !(time >= 0.0) || !time.is_finite() {
                    return Err(Error::input(format!("record {who}: censoring time {time} invalid")));
                }
                if let Some(c) = self.censor_at {
                    if (c - time).abs() > 1e-9 * c.abs().max(1.0) {
                        return Err(Error::input(format!("record {who}: censored at {time} but censoring time is {c}")));
                    }
                }
                if self.truncation.intersect_interval(time, f64::INFINITY).is_empty() {
                    return Err(Error::input(format!("record {who}: censoring time {time} beyond its truncation set")));
                }
            }
            Event::IntervalCensored { lower, upper } => {
                if !(lower < upper) || !(lower >= 0.0) || !lower.is_finite() || upper.is_nan() {
                    return Err(Error::input(format!("record {who}: invalid censoring interval [{lower}, {upper})")));
                }
                if self.truncation.intersect_interval(lower, upper).is_empty() {
                    return Err(Error::input(format!("record {who}: censoring interval disjoint from truncation set")));
                }
            }
        }
        Ok(())
    }

    /// Re-expresses the record as an exceedance of `origin_age + delta`.
    /// Truncation sets are intersected with `(delta, inf)` and shifted.
    pub fn above(&self, delta: f64) -> ThresholdOutcome {
        if delta <= 0.0 {
            return ThresholdOutcome::Kept(self.clone());
        }
        let tol = TIE_TOL * delta.max(1.0);
        let event = match self.event {
            Event::Observed { time } => {
                if (time - delta).abs() <= tol {
                    return ThresholdOutcome::Tie;
                }
                if time < delta {
                    return ThresholdOutcome::Below;
                }
                Event::Observed { time: time - delta }
            }
            Event::RightCensored { time } => {
                if time < delta {
                    // Alive at `time < delta`: exceedance of the threshold unknown.
                    return ThresholdOutcome::Below;
                }
                Event::RightCensored { time: time - delta }
            }
            Event::IntervalCensored { lower, upper } => {
                if upper <= delta + tol {
                    return ThresholdOutcome::Below;
                }
                Event::IntervalCensored { lower: lower.max(delta) - delta, upper: upper - delta }
            }
        };
        let truncation = self.truncation.intersect_interval(delta, f64::INFINITY).shift(-delta);
        if truncation.is_empty() {
            return ThresholdOutcome::Below;
        }
        let mut out = self.clone();
        out.event = event;
        out.truncation = truncation;
        out.origin_age = self.origin_age + delta;
        out.censor_at = self.censor_at.map(|c| c - delta);
        ThresholdOutcome::Kept(out)
    }

    /// Multiplies every time (event, truncation, censoring) by `c > 0`.
    pub fn rescaled(&self, c: f64) -> LifetimeRecord {
        let mut out = self.clone();
        out.event = self.event.scaled(c);
        out.truncation = self.truncation.scale(c);
        out.censor_at = self.censor_at.map(|v| v * c);
        out
    }
}

/// Records re-expressed above an absolute threshold age, with counts of
/// what was dropped.
#[derive(Debug, Clone, Default)]
pub struct Exceedances {
    pub records: Vec<LifetimeRecord>,
    pub ties: usize,
    pub below: usize,
}

/// Selects exceedances of the absolute age `threshold`. Records whose origin
/// lies above the threshold are an input error.
pub fn exceedances(records: &[LifetimeRecord], threshold: f64) -> Result<Exceedances> {
    let mut out = Exceedances::default();
    for r in records {
        let delta = threshold - r.origin_age;
        if delta < -1e-9 {
            return Err(Error::input(format!(
                "threshold {threshold} lies below the origin age {} of record {}",
                r.origin_age,
                r.label()
            )));
        }
        match r.above(delta.max(0.0)) {
            ThresholdOutcome::Kept(k) => out.records.push(k),
            ThresholdOutcome::Tie => out.ties += 1,
            ThresholdOutcome::Below => out.below += 1,
        }
    }
    Ok(out)
}
