//! Log-likelihoods under truncation and censoring, maximum likelihood
//! fitting, endpoint profiles and likelihood ratio tests.
//!
//! Every contribution has the form `log P(E ∩ T) - log P(T)` where `E` is
//! what was observed about the event and `T` the record's truncation set;
//! observed events use the density in place of `P(E ∩ T)`.

mod fit;
mod lrt;
mod profile;
mod scan;
mod simulate;

pub use fit::{fit_exceedances, fit_mle, FitOptions, FitResult};
pub use lrt::{bootstrap_lrt, lrt_nested, nesting, Calibration, Nesting, TestResult};
pub use profile::{profile_endpoint, ConfidenceLimit, ProfileGrid, ProfileTrace};
pub use scan::{group_comparison, nc_fit_and_shape_test, threshold_scan, wald_compare, ShapeTest, ScanRow, WaldResult};
pub use simulate::{simulate_dataset, simulate_like};

use crate::error::{Error, Result};
use crate::models::{ModelSpec, Params};
use crate::numeric::special::log_diff_exp;
use crate::record::{exceedances, Event, LifetimeRecord, TruncationSet};

/// `log P(T ∩ [lo, hi])` without allocating.
fn log_prob_clipped(p: &Params, set: &TruncationSet, lo: f64, hi: f64) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    for iv in set.intervals() {
        let a = iv.lower.max(lo);
        let b = iv.upper.min(hi);
        if b > a {
            let v = log_diff_exp(p.log_survivor(a), p.log_survivor(b));
            acc = if acc == f64::NEG_INFINITY {
                v
            } else {
                let m = acc.max(v);
                if m == f64::NEG_INFINITY {
                    m
                } else {
                    m + ((acc - m).exp() + (v - m).exp()).ln()
                }
            };
        }
    }
    acc
}

/// One record's log-likelihood contribution; records are already expressed
/// relative to the model threshold.
pub fn record_loglik(p: &Params, r: &LifetimeRecord) -> f64 {
    let log_pt = log_prob_clipped(p, &r.truncation, f64::NEG_INFINITY, f64::INFINITY);
    if log_pt == f64::NEG_INFINITY || log_pt.is_nan() {
        return f64::NEG_INFINITY;
    }
    let num = match r.event {
        Event::Observed { time } => {
            let (lo, hi) = p.support();
            if time < lo || time >= hi {
                return f64::NEG_INFINITY;
            }
            p.log_density_unchecked(time)
        }
        Event::RightCensored { time } => log_prob_clipped(p, &r.truncation, time, f64::INFINITY),
        Event::IntervalCensored { lower, upper } => log_prob_clipped(p, &r.truncation, lower, upper),
    };
    num - log_pt
}

/// Sum of contributions for records already relative to the threshold.
/// Returns `-inf` if any contribution is `-inf` or undefined.
pub fn loglik_exceedances(p: &Params, records: &[LifetimeRecord]) -> f64 {
    let mut total = 0.0;
    for r in records {
        let v = record_loglik(p, r);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += v;
    }
    total
}

/// Log-likelihood with a per-record breakdown of failures.
#[derive(Debug, Clone)]
pub struct LoglikReport {
    pub value: f64,
    /// Indices (into the exceedance set) of records whose truncation set
    /// has zero probability under the model.
    pub zero_probability: Vec<usize>,
    /// Indices of records whose event has zero probability.
    pub impossible_events: Vec<usize>,
}

pub fn loglik_report(p: &Params, records: &[LifetimeRecord]) -> LoglikReport {
    let mut zero_probability = Vec::new();
    let mut impossible_events = Vec::new();
    let mut value = 0.0;
    for (i, r) in records.iter().enumerate() {
        if p.log_prob_set(&r.truncation) == f64::NEG_INFINITY {
            zero_probability.push(i);
            value = f64::NEG_INFINITY;
            continue;
        }
        let v = record_loglik(p, r);
        if !(v > f64::NEG_INFINITY) {
            impossible_events.push(i);
            value = f64::NEG_INFINITY;
        } else {
            value += v;
        }
    }
    LoglikReport { value, zero_probability, impossible_events }
}

/// Log-likelihood of `params` for the exceedances of `spec.threshold`.
/// Zero-probability truncation sets give `-inf`; use [`loglik_report`] to
/// list the offending records.
pub fn loglik(spec: &ModelSpec, params: &Params, records: &[LifetimeRecord]) -> Result<f64> {
    if params.family() != spec.family {
        return Err(Error::input(format!("parameters are for {}, model is {}", params.family(), spec.family)));
    }
    params.validate()?;
    let ex = exceedances(records, spec.threshold)?;
    Ok(loglik_exceedances(params, &ex.records))
}
