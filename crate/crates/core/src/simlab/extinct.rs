use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_cohorts, CohortSimConfig};
use crate::error::{Error, Result};
use crate::likelihood::{fit_exceedances, FitOptions};
use crate::models::{Family, ModelSpec, Params};
use crate::numeric::stats::{mean, quantile_sorted, variance};
use crate::record::{Event, LifetimeRecord};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctCohortConfig {
    pub cohort: CohortSimConfig,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub mean: f64,
    pub bias: f64,
    /// Monte Carlo standard error of the mean.
    pub se_mean: f64,
    pub variance: f64,
    /// Minimum, quartiles and maximum.
    pub box_stats: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctCohortResult {
    pub truth: f64,
    pub replicates: usize,
    /// Replicates without any extinct cohort.
    pub dropped: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSummary>,
    /// Per kept replicate: naive, extinct-cohort and full-data estimates
    /// of the exponential scale.
    pub estimates: Vec<[f64; 3]>,
}

pub const ESTIMATOR_NAMES: [&str; 3] = ["extinct_naive", "extinct_truncated", "all_truncated"];

impl ExtinctCohortResult {
    pub fn to_csv(&self) -> String {
        let mut s = format!("replicate,{}\n", ESTIMATOR_NAMES.join(","));
        for (i, e) in self.estimates.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", e[0], e[1], e[2]));
        }
        s
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

pub(crate) fn exp_fit(records: &[LifetimeRecord]) -> Option<f64> {
    let spec = ModelSpec::new(Family::Exponential, 0.0);
    let fit = fit_exceedances(&spec, records, &FitOptions::quick())
        .ok()
        .filter(|f| f.converged)
        .or_else(|| fit_exceedances(&spec, records, &FitOptions::default()).ok())?;
    fit.estimate("sigma").filter(|v| v.is_finite())
}

fn summarize(name: &str, v: &[f64], truth: f64) -> EstimatorSummary {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = mean(v);
    let var = if v.len() > 1 { variance(v) } else { 0.0 };
    EstimatorSummary {
        name: name.to_string(),
        mean: m,
        bias: m - truth,
        se_mean: (var / v.len() as f64).sqrt(),
        variance: var,
        box_stats: [s[0], quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75), s[s.len() - 1]],
    }
}

/// Compares three estimators of an exponential scale over replicate
/// populations: the naive mean of extinct-cohort lifetimes, the
/// extinct-cohort estimate allowing for right truncation at `c2 - x`, and
/// the estimate from every death in the window allowing for interval
/// truncation. Replicate `r` uses random stream `r` of the seed.
pub fn extinct_cohort_experiment(config: &ExtinctCohortConfig) -> Result<ExtinctCohortResult> {
    let truth = match config.cohort.law {
        Params::Exponential { sigma } => sigma,
        _ => return Err(Error::input("the extinct-cohort experiment uses an exponential lifetime law")),
    };
    config.cohort.validate()?;
    if config.replicates == 0 {
        return Err(Error::input("at least one replicate is needed"));
    }
    let per: Vec<Result<Option<[f64; 3]>>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(config.seed, r as u64);
            let s = simulate_cohorts(&config.cohort, &mut g)?;
            if s.extinct.is_empty() || s.interval_truncated.is_empty() {
                return Ok(None);
            }
            let naive = mean(&s.extinct.iter().map(|r| match r.event {
                Event::Observed { time } => time,
                _ => f64::NAN,
            }).collect::<Vec<_>>());
            let trunc = exp_fit(&s.extinct).ok_or_else(|| Error::numeric(format!("replicate {r}: extinct-cohort fit failed")))?;
            let full = exp_fit(&s.interval_truncated)
                .ok_or_else(|| Error::numeric(format!("replicate {r}: full-data fit failed")))?;
            Ok(Some([naive, trunc, full]))
        })
        .collect();
    let mut estimates = Vec::with_capacity(config.replicates);
    let mut dropped = 0;
    for p in per {
        match p? {
            Some(e) => estimates.push(e),
            None => dropped += 1,
        }
    }
    if estimates.is_empty() {
        return Err(Error::numeric("every replicate lacked an extinct cohort"));
    }
    let estimators = (0..3)
        .map(|k| summarize(ESTIMATOR_NAMES[k], &estimates.iter().map(|e| e[k]).collect::<Vec<_>>(), truth))
        .collect();
    Ok(ExtinctCohortResult { truth, replicates: config.replicates, dropped, seed: config.seed, estimators, estimates })
}
