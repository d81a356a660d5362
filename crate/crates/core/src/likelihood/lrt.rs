use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_exceedances, FitOptions, FitResult, MIN_RECORDS};
use super::simulate::simulate_dataset;
use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec, Params};
use crate::numeric::stats::chi2_sf;
use crate::record::{exceedances, LifetimeRecord};
use crate::rng;

/// Reference distribution of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    Chi2,
    /// Equal mixture of a point mass at zero and chi-squared(1): the null
    /// value lies on the boundary of the alternative's parameter space.
    HalfChi2,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Likelihood ratio statistic `w = 2 (l1 - l0) >= 0`.
    pub statistic: f64,
    pub p_asymptotic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bootstrap: Option<f64>,
    /// Calibration of the headline p-value ([`TestResult::p_value`]).
    pub calibration: Calibration,
    /// Calibration used for `p_asymptotic`.
    pub asymptotic: Calibration,
    pub df: f64,
    /// Bootstrap replicates requested.
    pub replicates: usize,
    pub failed_replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub loglik_null: f64,
    pub loglik_alt: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_statistics: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestResult {
    pub fn p_value(&self) -> f64 {
        self.p_bootstrap.unwrap_or(self.p_asymptotic)
    }
}

/// Statistics this close to zero are zero: they arise when both fits sit
/// at the same boundary optimum and differ only by optimizer tolerance.
pub const ZERO_STATISTIC: f64 = 1e-6;

pub(crate) fn lr_statistic(l0: f64, l1: f64) -> f64 {
    let w = 2.0 * (l1 - l0);
    if w < ZERO_STATISTIC {
        0.0
    } else {
        w
    }
}

pub(crate) fn asymptotic_p(w: f64, calibration: Calibration, df: f64) -> f64 {
    match calibration {
        Calibration::HalfChi2 => {
            if w <= 0.0 {
                1.0
            } else {
                0.5 * chi2_sf(w, 1.0)
            }
        }
        _ => chi2_sf(w, df),
    }
}

/// How a null model sits inside an alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nesting {
    pub calibration: Calibration,
    pub df: f64,
}

/// Supported nested pairs and their asymptotic calibration.
pub fn nesting(null: Family, alt: Family) -> Result<Nesting> {
    use Family::*;
    let half = Nesting { calibration: Calibration::HalfChi2, df: 1.0 };
    let chi1 = Nesting { calibration: Calibration::Chi2, df: 1.0 };
    match (null, alt) {
        (Exponential, Gompertz) | (Gompertz, GompertzMakeham) | (GenPareto, ExtGp) => Ok(half),
        (Exponential, GenPareto) | (Gompertz, ExtGp) | (GenPareto, WeibullGp) => Ok(chi1),
        _ => Err(Error::NotNested(format!("{null} is not a supported submodel of {alt}"))),
    }
}

/// The alternative's parameters reproducing the null model exactly.
fn embed(null: &Params, alt: Family) -> Option<Params> {
    Some(match (null, alt) {
        (Params::Exponential { sigma }, Family::Gompertz) => Params::Gompertz { sigma: *sigma, beta: 0.0 },
        (Params::Exponential { sigma }, Family::GenPareto) => Params::GenPareto { sigma: *sigma, xi: 0.0 },
        (Params::Gompertz { sigma, beta }, Family::GompertzMakeham) => {
            Params::GompertzMakeham { sigma: *sigma, beta: *beta, lambda: 0.0 }
        }
        (Params::Gompertz { sigma, beta }, Family::ExtGp) => Params::ExtGp { sigma: *sigma, beta: *beta, xi: 0.0 },
        (Params::GenPareto { sigma, xi }, Family::ExtGp) => Params::ExtGp { sigma: *sigma, beta: 0.0, xi: *xi },
        (Params::GenPareto { sigma, xi }, Family::WeibullGp) => Params::WeibullGp { sigma: *sigma, beta: 1.0, xi: *xi },
        _ => return None,
    })
}

fn check_pair(spec0: &ModelSpec, spec1: &ModelSpec) -> Result<Nesting> {
    let n = nesting(spec0.family, spec1.family)?;
    if (spec0.threshold - spec1.threshold).abs() > 1e-12 {
        return Err(Error::NotNested(format!(
            "models use different thresholds ({} and {})",
            spec0.threshold, spec1.threshold
        )));
    }
    Ok(n)
}

fn fit_pair(
    spec0: &ModelSpec,
    spec1: &ModelSpec,
    records: &[LifetimeRecord],
    opts0: FitOptions,
    mut opts1: FitOptions,
) -> Result<(FitResult, FitResult)> {
    let f0 = fit_exceedances(spec0, records, &opts0)?;
    if let Some(p) = embed(&f0.mle, spec1.family) {
        opts1.starts.push(p);
    }
    let f1 = fit_exceedances(spec1, records, &opts1)?;
    Ok((f0, f1))
}

fn prepare(spec0: &ModelSpec, records: &[LifetimeRecord]) -> Result<Vec<LifetimeRecord>> {
    for r in records {
        r.validate()?;
    }
    let ex = exceedances(records, spec0.threshold)?;
    if ex.records.len() < MIN_RECORDS {
        return Err(Error::input(format!("only {} usable records above the threshold", ex.records.len())));
    }
    Ok(ex.records)
}

fn result(w: f64, n: Nesting, f0: &FitResult, f1: &FitResult) -> TestResult {
    TestResult {
        statistic: w,
        p_asymptotic: asymptotic_p(w, n.calibration, n.df),
        p_bootstrap: None,
        calibration: n.calibration,
        asymptotic: n.calibration,
        df: n.df,
        replicates: 0,
        failed_replicates: 0,
        seed: None,
        loglik_null: f0.loglik,
        loglik_alt: f1.loglik,
        bootstrap_statistics: Vec::new(),
        note: None,
    }
}

/// Likelihood ratio test of `spec0` within `spec1` with asymptotic
/// calibration (half chi-squared when the null is on the boundary).
pub fn lrt_nested(spec0: &ModelSpec, spec1: &ModelSpec, records: &[LifetimeRecord]) -> Result<TestResult> {
    let n = check_pair(spec0, spec1)?;
    let ex = prepare(spec0, records)?;
    let (f0, f1) = fit_pair(spec0, spec1, &ex, FitOptions::default(), FitOptions::default())?;
    let w = lr_statistic(f0.loglik, f1.loglik);
    Ok(result(w, n, &f0, &f1))
}

/// Parametric bootstrap calibration of the likelihood ratio test:
/// `B` datasets are simulated from the fitted null with every record's
/// observation scheme reused, and `p = (1 + #{w* >= w}) / (B + 1)`.
/// Replicate `b` always uses random stream `b` of `seed`.
pub fn bootstrap_lrt(
    spec0: &ModelSpec,
    spec1: &ModelSpec,
    records: &[LifetimeRecord],
    b: usize,
    seed: u64,
) -> Result<TestResult> {
    let n = check_pair(spec0, spec1)?;
    let ex = prepare(spec0, records)?;
    let (f0, f1) = fit_pair(spec0, spec1, &ex, FitOptions::default(), FitOptions::default())?;
    if !f0.converged {
        return Err(Error::numeric("null model fit did not converge"));
    }
    let w = lr_statistic(f0.loglik, f1.loglik);
    let mut out = result(w, n, &f0, &f1);
    out.calibration = Calibration::Bootstrap;
    out.replicates = b;
    out.seed = Some(seed);
    if b == 0 {
        out.p_bootstrap = Some(1.0);
        out.note = Some("no bootstrap replicates; p-value is degenerate".into());
        return Ok(out);
    }
    let stats = bootstrap_statistics(spec0, spec1, &ex, &f0, &f1, b, seed);
    let ok: Vec<f64> = stats.iter().filter_map(|s| *s).collect();
    let failed = b - ok.len();
    out.failed_replicates = failed;
    if failed as f64 > 0.02 * b as f64 {
        return Err(Error::numeric(format!("{failed} of {b} bootstrap replicate fits failed")));
    }
    let exceed = ok.iter().filter(|&&v| v >= w).count();
    out.p_bootstrap = Some((1 + exceed) as f64 / (ok.len() + 1) as f64);
    out.bootstrap_statistics = ok;
    Ok(out)
}

pub(crate) fn bootstrap_statistics(
    spec0: &ModelSpec,
    spec1: &ModelSpec,
    ex: &[LifetimeRecord],
    f0: &FitResult,
    f1: &FitResult,
    b: usize,
    seed: u64,
) -> Vec<Option<f64>> {
    (0..b)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let data = simulate_dataset(&f0.mle, ex, &mut r).ok()?;
            let (g0, g1) = fit_pair(
                spec0,
                spec1,
                &data,
                FitOptions::warm(vec![f0.mle.clone()]),
                FitOptions::warm(vec![f1.mle.clone()]),
            )
            .ok()?;
            if !(g0.loglik.is_finite() && g1.loglik.is_finite()) || !g0.converged {
                return None;
            }
            Some(lr_statistic(g0.loglik, g1.loglik))
        })
        .collect()
}
