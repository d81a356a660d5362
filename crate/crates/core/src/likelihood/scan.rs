use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fit::{fit_exceedances, fit_mle, FitOptions, FitResult};
use super::lrt::{asymptotic_p, lr_statistic, Calibration, TestResult};
use crate::error::{Error, Result};
use crate::models::{dimension, Family, ModelSpec};
use crate::numeric::stats::normal_two_sided;
use crate::record::{exceedances, Event, LifetimeRecord};

/// One row of a threshold scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub threshold: f64,
    pub n_u: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Fits `family` above each threshold in turn.
pub fn threshold_scan(family: Family, records: &[LifetimeRecord], thresholds: &[f64]) -> Result<Vec<ScanRow>> {
    let mut out = Vec::with_capacity(thresholds.len());
    for &u in thresholds {
        let n_u = exceedances(records, u)?.records.len();
        let spec = ModelSpec::new(family, u);
        match fit_mle(&spec, records) {
            Ok(fit) => out.push(ScanRow { threshold: u, n_u, fit: Some(fit), error: None }),
            Err(e @ Error::Input(_)) | Err(e @ Error::Numeric(_)) => {
                out.push(ScanRow { threshold: u, n_u, fit: None, error: Some(e.to_string()) })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Piecewise generalized Pareto fit with equal-shape tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTest {
    pub thresholds: Vec<f64>,
    pub full: FitResult,
    /// For `k = 1..K-1`: the fit with shapes `k..K` tied together, and the
    /// test of that restriction (`K - k` degrees of freedom).
    pub nested: Vec<(usize, FitResult, TestResult)>,
}

/// Fits a piecewise generalized Pareto model with pieces starting at each
/// threshold, and for each `k` tests equality of the shapes from piece `k`
/// onwards against the full model.
pub fn nc_fit_and_shape_test(records: &[LifetimeRecord], thresholds: &[f64]) -> Result<ShapeTest> {
    if thresholds.is_empty() {
        return Err(Error::input("at least one threshold is required"));
    }
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("thresholds must be strictly increasing"));
    }
    for r in records {
        r.validate()?;
    }
    let u1 = thresholds[0];
    let ex = exceedances(records, u1)?;
    let knots: Vec<f64> = thresholds.iter().map(|u| u - u1).collect();
    let k_total = knots.len();
    for k in 0..k_total {
        let lo = knots[k];
        let hi = if k + 1 < k_total { knots[k + 1] } else { f64::INFINITY };
        let deaths = ex
            .records
            .iter()
            .filter(|r| match r.event {
                Event::Observed { time } => time >= lo && time < hi,
                Event::IntervalCensored { lower, upper } => lower >= lo && upper <= hi,
                Event::RightCensored { .. } => false,
            })
            .count();
        let label = if hi.is_finite() {
            format!("[{}, {})", thresholds[k], thresholds[k + 1])
        } else {
            format!("[{}, inf)", thresholds[k])
        };
        if deaths == 0 {
            return Err(Error::input(format!("no deaths in interval {label}")));
        }
        if deaths < 5 {
            return Err(Error::input(format!("only {deaths} deaths in interval {label}; at least 5 needed")));
        }
    }
    let full_spec = ModelSpec::piecewise(u1, knots.clone());
    let full = fit_exceedances(&full_spec, &ex.records, &FitOptions::default())?;
    let mut nested = Vec::new();
    for k in 1..k_total {
        let spec = ModelSpec::piecewise(u1, knots[..k].to_vec());
        let null = fit_exceedances(&spec, &ex.records, &FitOptions::default())?;
        let df = (k_total - k) as f64;
        let w = lr_statistic(null.loglik, full.loglik);
        let test = TestResult {
            statistic: w,
            p_asymptotic: asymptotic_p(w, Calibration::Chi2, df),
            p_bootstrap: None,
            calibration: Calibration::Chi2,
            asymptotic: Calibration::Chi2,
            df,
            replicates: 0,
            failed_replicates: 0,
            seed: None,
            loglik_null: null.loglik,
            loglik_alt: full.loglik,
            bootstrap_statistics: Vec::new(),
            note: None,
        };
        nested.push((k, null, test));
    }
    Ok(ShapeTest { thresholds: thresholds.to_vec(), full, nested })
}

/// Likelihood ratio test that all groups share one distribution:
/// `w = 2 (sum of per-group maxima - pooled maximum)`, chi-squared with
/// `(m - 1) k` degrees of freedom for `m` groups and `k` parameters.
pub fn group_comparison(
    records: &[LifetimeRecord],
    grouping: &str,
    family: Family,
    threshold: f64,
) -> Result<TestResult> {
    let spec = ModelSpec::new(family, threshold);
    let mut groups: BTreeMap<String, Vec<LifetimeRecord>> = BTreeMap::new();
    for r in records {
        let key = r
            .covariates
            .get(grouping)
            .ok_or_else(|| Error::input(format!("record '{}' has no covariate '{grouping}'", r.id)))?;
        groups.entry(key.clone()).or_default().push(r.clone());
    }
    let m = groups.values().filter(|g| !g.is_empty()).count();
    if m < 2 {
        return Err(Error::input(format!("grouping '{grouping}' has {m} nonempty group(s); at least 2 needed")));
    }
    let pooled = fit_mle(&spec, records)?;
    let mut sum = 0.0;
    for (name, g) in &groups {
        let fit = fit_mle(&spec, g)?;
        if !fit.converged {
            return Err(Error::numeric(format!("fit for group '{name}' did not converge")));
        }
        sum += fit.loglik;
    }
    if !pooled.converged {
        return Err(Error::numeric("pooled fit did not converge"));
    }
    let df = ((m - 1) * dimension(&spec)) as f64;
    let w = lr_statistic(pooled.loglik, sum);
    Ok(TestResult {
        statistic: w,
        p_asymptotic: asymptotic_p(w, Calibration::Chi2, df),
        p_bootstrap: None,
        calibration: Calibration::Chi2,
        asymptotic: Calibration::Chi2,
        df,
        replicates: 0,
        failed_replicates: 0,
        seed: None,
        loglik_null: pooled.loglik,
        loglik_alt: sum,
        bootstrap_statistics: Vec::new(),
        note: None,
    })
}

/// Wald comparison of two independent estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub difference: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

pub fn wald_compare(est1: f64, se1: f64, est2: f64, se2: f64) -> Result<WaldResult> {
    if !(se1 > 0.0 && se2 > 0.0) {
        return Err(Error::input("standard errors must be positive"));
    }
    let difference = est1 - est2;
    let std_error = (se1 * se1 + se2 * se2).sqrt();
    let z = difference / std_error;
    Ok(WaldResult { difference, std_error, z, p_value: normal_two_sided(z) })
}
