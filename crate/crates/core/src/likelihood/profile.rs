use serde::{Deserialize, Serialize};

use super::fit::{fit_exceedances, FitOptions, MIN_RECORDS};
use super::loglik_exceedances;
use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec, Params};
use crate::numeric::optim::{bisect, brent_min};
use crate::numeric::stats::chi2_quantile;
use crate::record::{exceedances, LifetimeRecord};

/// Which endpoint values to evaluate the profile at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileGrid {
    /// 200 points log-spaced in `psi - u` from just above the largest
    /// excess to `u + 80` years.
    Auto,
    /// Endpoint values (absolute ages).
    Explicit(Vec<f64>),
    /// Confidence limits only.
    LimitsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceLimit {
    pub level: f64,
    /// `None` when no finite endpoint is supported at this level.
    pub lower: Option<f64>,
    /// `None` together with `upper_unbounded` when the profile never drops
    /// below the cutoff.
    pub upper: Option<f64>,
    pub upper_unbounded: bool,
    /// The lower limit is the largest observed excess: the profile is still
    /// above the cutoff at the edge of the support.
    pub lower_at_support: bool,
}

/// Profile log-likelihood of the generalized Pareto endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTrace {
    pub parameter: String,
    pub threshold: f64,
    pub grid: Vec<f64>,
    /// Profile log-likelihood per grid value; `None` where the endpoint is
    /// incompatible with the data.
    pub values: Vec<Option<f64>>,
    pub max_loglik: f64,
    /// Maximum likelihood endpoint; `None` when the fitted shape is
    /// nonnegative (endpoint infinite).
    pub mle: Option<f64>,
    pub sigma_hat: f64,
    pub xi_hat: f64,
    /// Profile log-likelihood as the endpoint tends to infinity.
    pub limit_loglik: f64,
    pub limits: Vec<ConfidenceLimit>,
    pub n_used: usize,
}

impl ProfileTrace {
    pub fn limit(&self, level: f64) -> Option<&ConfidenceLimit> {
        self.limits.iter().find(|l| (l.level - level).abs() < 1e-12)
    }

    /// Two-column CSV (`psi,profile_loglik`) of the evaluated grid.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("psi,profile_loglik\n");
        for (g, v) in self.grid.iter().zip(&self.values) {
            match v {
                Some(v) => s.push_str(&format!("{g},{v}\n")),
                None => s.push_str(&format!("{g},\n")),
            }
        }
        s
    }
}

struct Profiler<'a> {
    records: &'a [LifetimeRecord],
    floor: f64,
}

impl Profiler<'_> {
    fn ll(&self, sigma: f64, xi: f64) -> f64 {
        loglik_exceedances(&Params::GenPareto { sigma, xi }, self.records)
    }

    /// Maximizes over log sigma on `[hi - 12, hi]` by a coarse scan then
    /// Brent's method around the best scan point.
    fn maximize_log_sigma<F: Fn(f64) -> f64>(f: F, hi: f64, width: f64) -> f64 {
        let n = 25;
        let lo = hi - width;
        let step = (hi - lo) / (n - 1) as f64;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for i in 0..n {
            let v = f(lo + step * i as f64);
            if v > best.0 {
                best = (v, i);
            }
        }
        if best.0 == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let a = lo + step * best.1.saturating_sub(1) as f64;
        let b = (lo + step * (best.1 + 1) as f64).min(hi);
        let (_, v) = brent_min(|x| -f(x), a, b, 1e-10);
        (-v).max(best.0)
    }

    /// Profile at endpoint excess `e`: `xi = -sigma / e`, `0 < sigma <= e`.
    fn at(&self, e: f64) -> f64 {
        if !(e > self.floor) || !e.is_finite() {
            return f64::NEG_INFINITY;
        }
        Self::maximize_log_sigma(|ls| self.ll(ls.exp(), -ls.exp() / e), e.ln(), 14.0)
    }

    /// Profile in the limit of an infinite endpoint (exponential tail).
    fn at_infinity(&self, scale: f64) -> f64 {
        Self::maximize_log_sigma(|ls| self.ll(ls.exp(), 0.0), scale.ln() + 8.0, 16.0)
    }
}

/// Profile likelihood for the endpoint `psi = u - sigma/xi` of a
/// generalized Pareto model for exceedances of `threshold`, with confidence
/// limits where the profile drops by `chi2_1(level)/2`.
pub fn profile_endpoint(
    records: &[LifetimeRecord],
    threshold: f64,
    grid: &ProfileGrid,
    levels: &[f64],
) -> Result<ProfileTrace> {
    for r in records {
        r.validate()?;
    }
    let ex = exceedances(records, threshold)?;
    if ex.records.len() < MIN_RECORDS {
        return Err(Error::input(format!("only {} usable records above threshold {threshold}", ex.records.len())));
    }
    let spec = ModelSpec::new(Family::GenPareto, threshold);
    let fit = fit_exceedances(&spec, &ex.records, &FitOptions::default())?;
    let (sigma_hat, xi_hat) = match fit.mle {
        Params::GenPareto { sigma, xi } => (sigma, xi),
        _ => unreachable!(),
    };
    let floor = ex.records.iter().map(|r| r.event.support_floor()).fold(0.0, f64::max);
    let pr = Profiler { records: &ex.records, floor };
    let mle_excess = if xi_hat < 0.0 { Some(-sigma_hat / xi_hat) } else { None };
    let mut max_loglik = fit.loglik;
    if let Some(e) = mle_excess {
        max_loglik = max_loglik.max(pr.at(e));
    }
    let limit_loglik = pr.at_infinity(sigma_hat);
    max_loglik = max_loglik.max(limit_loglik);

    let mut limits = Vec::new();
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::input(format!("confidence level {level} outside (0, 1)")));
        }
        let cutoff = max_loglik - 0.5 * chi2_quantile(level, 1.0);
        limits.push(confidence_limit(&pr, level, cutoff, mle_excess, limit_loglik, threshold));
    }

    let excess_grid: Vec<f64> = match grid {
        ProfileGrid::Auto => {
            let lo = floor + 0.01;
            let hi = if lo < 80.0 { 80.0 } else { 4.0 * lo };
            let n = 200;
            (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
        }
        ProfileGrid::Explicit(v) => v.iter().map(|psi| psi - threshold).collect(),
        ProfileGrid::LimitsOnly => Vec::new(),
    };
    let values = excess_grid
        .iter()
        .map(|&e| {
            let v = pr.at(e);
            v.is_finite().then_some(v)
        })
        .collect();

    Ok(ProfileTrace {
        parameter: "psi".into(),
        threshold,
        grid: excess_grid.iter().map(|e| e + threshold).collect(),
        values,
        max_loglik,
        mle: mle_excess.map(|e| e + threshold),
        sigma_hat,
        xi_hat,
        limit_loglik,
        limits,
        n_used: ex.records.len(),
    })
}

fn confidence_limit(
    pr: &Profiler,
    level: f64,
    cutoff: f64,
    mle_excess: Option<f64>,
    limit_loglik: f64,
    threshold: f64,
) -> ConfidenceLimit {
    let g = |e: f64| pr.at(e) - cutoff;
    let tol = 1e-9;
    let edge = pr.floor * (1.0 + 1e-10) + 1e-10;
    let mut out =
        ConfidenceLimit { level, lower: None, upper: None, upper_unbounded: false, lower_at_support: false };

    // A finite point inside the confidence set, if any.
    let inside = match mle_excess {
        Some(e) => Some(e),
        None if limit_loglik >= cutoff => {
            let mut e = (2.0 * pr.floor).max(1.0);
            let mut found = None;
            for _ in 0..80 {
                if g(e) >= 0.0 {
                    found = Some(e);
                    break;
                }
                e *= 2.0;
            }
            found
        }
        None => None,
    };
    let Some(inside) = inside else {
        out.upper_unbounded = true;
        return out;
    };

    if g(edge) >= 0.0 {
        out.lower = Some(pr.floor + threshold);
        out.lower_at_support = true;
    } else if let Some(e) = bisect(g, edge, inside, tol) {
        out.lower = Some(e + threshold);
    }

    if mle_excess.is_none() || limit_loglik >= cutoff {
        out.upper_unbounded = true;
        return out;
    }
    let mut hi = inside * 2.0;
    for _ in 0..80 {
        if g(hi) < 0.0 {
            break;
        }
        hi *= 2.0;
    }
    match bisect(g, inside, hi, tol) {
        Some(e) => out.upper = Some(e + threshold),
        None => out.upper_unbounded = true,
    }
    out
}
