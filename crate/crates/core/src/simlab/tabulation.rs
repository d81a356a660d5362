use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit_exceedances, FitOptions, FitResult};
use crate::models::{gp_endpoint, Family, ModelSpec, Params};
use crate::numeric::stats::{ks_two_sample, quantile_sorted};
use crate::record::{Event, LifetimeRecord, TruncationSet};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulationConfig {
    pub n: usize,
    pub sigma: f64,
    pub xi: f64,
    /// Threshold age.
    pub threshold: f64,
    pub replicates: usize,
    /// Width of the age bins in years; zero keeps exact lifetimes.
    pub bin_width: f64,
    /// Right-truncation bounds (excess years) are uniform on this range.
    #[serde(default = "default_truncation")]
    pub truncation_range: (f64, f64),
    /// Endpoint above which estimates are counted.
    #[serde(default = "default_cap")]
    pub cap: f64,
    pub seed: u64,
}

fn default_truncation() -> (f64, f64) {
    (6.0, 67.0)
}

fn default_cap() -> f64 {
    150.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSummary {
    pub median: f64,
    /// Quantiles at probabilities 0.025, 0.125, 0.25, 0.5, 0.75, 0.875,
    /// 0.95 and 0.975; infinite estimates sort last.
    pub quantiles: Vec<(f64, f64)>,
    /// Fraction of estimates above the cap (infinite ones included).
    pub fraction_above_cap: f64,
    pub fraction_positive_shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulationResult {
    pub true_endpoint: f64,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub seed: u64,
    pub exact: EndpointSummary,
    pub binned: EndpointSummary,
    /// Two-sample Kolmogorov distance between the two sets of estimates.
    pub ks_distance: f64,
    /// Per replicate `(exact, binned)` endpoint estimates; `None` (JSON
    /// null) marks an infinite estimate.
    pub estimates: Vec<(Option<f64>, Option<f64>)>,
    #[serde(skip)]
    shapes: Vec<(f64, f64)>,
}

impl TabulationResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("replicate,exact,binned,xi_exact,xi_binned\n");
        for (i, (e, b)) in self.estimates.iter().enumerate() {
            let f = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "inf".into());
            let (xe, xb) = self.shapes.get(i).copied().unwrap_or((f64::NAN, f64::NAN));
            s.push_str(&format!("{i},{},{},{xe},{xb}\n", f(e), f(b)));
        }
        s
    }

    /// Endpoint estimates with infinities, as `(exact, binned)` columns.
    pub fn columns(&self) -> (Vec<f64>, Vec<f64>) {
        let inf = |v: &Option<f64>| v.unwrap_or(f64::INFINITY);
        (self.estimates.iter().map(|e| inf(&e.0)).collect(), self.estimates.iter().map(|e| inf(&e.1)).collect())
    }
}

fn gp_fit(spec: &ModelSpec, records: &[LifetimeRecord]) -> Option<FitResult> {
    let quick = fit_exceedances(spec, records, &FitOptions::quick()).ok().filter(|f| f.converged);
    quick.or_else(|| fit_exceedances(spec, records, &FitOptions::default()).ok().filter(|f| f.loglik.is_finite()))
}

fn endpoint_of(fit: &FitResult) -> (f64, f64) {
    match fit.mle {
        Params::GenPareto { sigma, xi } => {
            let psi = if xi < 0.0 { fit.spec.threshold - sigma / xi } else { f64::INFINITY };
            (psi, xi)
        }
        _ => unreachable!(),
    }
}

fn summarize(v: &[f64], shapes: &[f64], cap: f64) -> EndpointSummary {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let probs = [0.025, 0.125, 0.25, 0.5, 0.75, 0.875, 0.95, 0.975];
    EndpointSummary {
        median: quantile_sorted(&s, 0.5),
        quantiles: probs.iter().map(|&p| (p, quantile_sorted(&s, p))).collect(),
        fraction_above_cap: v.iter().filter(|&&x| x > cap).count() as f64 / v.len() as f64,
        fraction_positive_shape: shapes.iter().filter(|&&x| x >= 0.0).count() as f64 / shapes.len() as f64,
    }
}

/// Binned copy of a right-truncated record: the lifetime is replaced by
/// its bin `[k w, (k + 1) w)`.
fn bin(r: &LifetimeRecord, w: f64) -> LifetimeRecord {
    let Event::Observed { time } = r.event else { return r.clone() };
    if w <= 0.0 {
        return r.clone();
    }
    let k = (time / w).floor();
    let mut out = r.clone();
    out.event = Event::IntervalCensored { lower: k * w, upper: (k + 1.0) * w };
    out
}

/// Sampling distributions of the generalized Pareto endpoint estimator
/// from exact and from binned right-truncated lifetimes. Replicate `r`
/// uses random stream `r` of the seed; both estimators see the same
/// simulated lifetimes.
pub fn tabulation_experiment(config: &TabulationConfig) -> Result<TabulationResult> {
    let law = Params::GenPareto { sigma: config.sigma, xi: config.xi };
    law.validate()?;
    if config.n < 3 || config.replicates == 0 {
        return Err(Error::input("need n >= 3 and at least one replicate"));
    }
    let (blo, bhi) = config.truncation_range;
    if !(blo > 0.0 && bhi >= blo) {
        return Err(Error::input("truncation range must be positive and ordered"));
    }
    if !(config.bin_width >= 0.0) {
        return Err(Error::input("bin width must be nonnegative"));
    }
    let spec = ModelSpec::new(Family::GenPareto, 0.0);
    let per: Vec<Option<((f64, f64), (f64, f64))>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(config.seed, r as u64);
            let mut exact = Vec::with_capacity(config.n);
            for _ in 0..config.n {
                let b = if bhi > blo { g.gen_range(blo..bhi) } else { blo };
                let t = law.sample_in_set(&TruncationSet::single(0.0, b), &mut g).ok()?;
                exact.push(LifetimeRecord::interval_truncated(t, 0.0, b));
            }
            let binned: Vec<LifetimeRecord> = exact.iter().map(|r| bin(r, config.bin_width)).collect();
            let fe = gp_fit(&spec, &exact)?;
            let fb = if config.bin_width > 0.0 { gp_fit(&spec, &binned)? } else { fe.clone() };
            Some((endpoint_of(&fe), endpoint_of(&fb)))
        })
        .collect();
    let failed = per.iter().filter(|p| p.is_none()).count();
    if failed as f64 > 0.02 * config.replicates as f64 {
        return Err(Error::numeric(format!("{failed} of {} replicate fits failed", config.replicates)));
    }
    let ok: Vec<_> = per.into_iter().flatten().collect();
    let u = config.threshold;
    let ex: Vec<f64> = ok.iter().map(|p| p.0 .0 + u).collect();
    let bn: Vec<f64> = ok.iter().map(|p| p.1 .0 + u).collect();
    let xs_e: Vec<f64> = ok.iter().map(|p| p.0 .1).collect();
    let xs_b: Vec<f64> = ok.iter().map(|p| p.1 .1).collect();
    let finite = |v: &[f64]| v.iter().map(|&x| if x.is_finite() { x } else { f64::MAX }).collect::<Vec<_>>();
    let ks = ks_two_sample(&finite(&ex), &finite(&bn)).statistic;
    let opt = |x: f64| x.is_finite().then_some(x);
    Ok(TabulationResult {
        true_endpoint: gp_endpoint(u, config.sigma, config.xi),
        replicates: config.replicates,
        failed_replicates: failed,
        seed: config.seed,
        exact: summarize(&ex, &xs_e, config.cap),
        binned: summarize(&bn, &xs_b, config.cap),
        ks_distance: ks,
        estimates: ex.iter().zip(&bn).map(|(&a, &b)| (opt(a), opt(b))).collect(),
        shapes: xs_e.into_iter().zip(xs_b).collect(),
    })
}
