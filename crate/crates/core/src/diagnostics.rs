//! Quantile-quantile plotting positions that respect each record's
//! truncation set, and parametric-bootstrap pointwise bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit_exceedances, simulate_dataset, FitOptions, FitResult};
use crate::models::Params;
use crate::nonparam::{kaplan_meier, turnbull_em, EmOptions, NpEstimate};
use crate::numeric::stats::quantile_sorted;
use crate::record::{Event, LifetimeRecord, TruncationSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QqStrategy {
    /// Transformed observations `F0^{-1}{F0^(i)(y_i)}` against ordinary
    /// positions.
    A,
    /// Raw observations against positions adjusted for each record's
    /// truncation set; these need not be monotone.
    #[default]
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub id: String,
    /// Observed excess lifetime.
    pub observed: f64,
    /// Horizontal coordinate (model quantile).
    pub position: f64,
    /// Vertical coordinate: the observation, or its transform under
    /// strategy A.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqData {
    pub strategy: QqStrategy,
    pub points: Vec<QqPoint>,
    /// Records left out: censored ones, and those whose truncation set has
    /// negligible model probability.
    pub skipped: Vec<String>,
}

impl QqData {
    /// CSV `position,value,lo,hi,record_id`; band columns are empty
    /// without a band.
    pub fn to_csv(&self, band: Option<&QqBand>) -> String {
        let mut s = String::from("position,value,lo,hi,record_id\n");
        for p in &self.points {
            let (lo, hi) = match band {
                Some(b) => {
                    let (lo, _, hi) = b.at(p.position);
                    (lo.to_string(), hi.to_string())
                }
                None => (String::new(), String::new()),
            };
            s.push_str(&format!("{},{},{},{},{}\n", p.position, p.value, lo, hi, p.id));
        }
        s
    }
}

/// Model probability of `[0, x] ∩ set`.
fn set_cdf(p: &Params, set: &TruncationSet, x: f64) -> f64 {
    set.intervals()
        .iter()
        .filter(|iv| iv.lower < x)
        .map(|iv| (p.survivor(iv.lower) - p.survivor(iv.upper.min(x))).max(0.0))
        .sum()
}

fn set_mass(p: &Params, set: &TruncationSet) -> f64 {
    set_cdf(p, set, f64::INFINITY)
}

/// Point of `set` below which the model puts probability `q`.
fn set_quantile(p: &Params, set: &TruncationSet, q: f64) -> f64 {
    let mut left = q;
    let ivs = set.intervals();
    for (k, iv) in ivs.iter().enumerate() {
        let m = (p.survivor(iv.lower) - p.survivor(iv.upper)).max(0.0);
        if left <= m || k + 1 == ivs.len() {
            let target = (p.cdf(iv.lower) + left.min(m)).clamp(0.0, 1.0);
            return p.quantile(target).unwrap_or(f64::NAN).clamp(iv.lower, iv.upper);
        }
        left -= m;
    }
    f64::NAN
}

fn np_set_cdf(f: &NpEstimate, set: &TruncationSet, x: f64) -> f64 {
    set.intervals()
        .iter()
        .filter(|iv| iv.lower < x)
        .map(|iv| {
            // Mass on atoms in (lower, min(upper, x)], counting an atom at
            // the lower end as inside.
            let hi = f.cdf_at(iv.upper.min(x));
            let lo = f.cdf_at(iv.lower) - mass_at(f, iv.lower);
            (hi - lo).max(0.0)
        })
        .sum()
}

fn mass_at(f: &NpEstimate, t: f64) -> f64 {
    let k = f.support.partition_point(|&s| s < t);
    if k < f.support.len() && f.support[k] == t {
        f.mass[k]
    } else {
        0.0
    }
}

const MIN_MASS: f64 = 1e-14;

/// Plotting positions for observed records.
///
/// Strategy B uses `v_i = F0_(i)^{-1}(q_i)`, where `F0_(i)` is the model
/// conditioned on record `i`'s truncation set and
/// `q_i = n {Fn(y_i) - Fn(a_i)} / (n {Fn(b_i) - Fn(a_i)} + 1)` is the
/// nonparametric conditional probability shrunk like `rank / (n + 1)`.
/// Strategy A plots `F0^{-1}{F0_(i)(y_i)}` against `F0^{-1}{rank / (n + 1)}`.
/// Without truncation both give the classical positions.
pub fn qq_positions_truncated(
    records: &[LifetimeRecord],
    f0: &Params,
    fn_est: &NpEstimate,
    strategy: QqStrategy,
) -> Result<QqData> {
    let mut skipped = Vec::new();
    let mut used: Vec<(&LifetimeRecord, f64, f64)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let id = if r.id.is_empty() { format!("#{i}") } else { r.id.clone() };
        let Event::Observed { time } = r.event else {
            skipped.push(id);
            continue;
        };
        let m0 = set_mass(f0, &r.truncation);
        if m0 < MIN_MASS {
            skipped.push(id);
            continue;
        }
        used.push((r, time, m0));
    }
    let n = used.len() as f64;
    let mut points = Vec::with_capacity(used.len());
    match strategy {
        QqStrategy::B => {
            for (i, &(r, y, _)) in used.iter().enumerate() {
                let num = np_set_cdf(fn_est, &r.truncation, y);
                let den = np_set_cdf(fn_est, &r.truncation, f64::INFINITY);
                let q = (n * num / (n * den + 1.0)).clamp(0.0, 1.0);
                let m0 = set_mass(f0, &r.truncation);
                let pos = set_quantile(f0, &r.truncation, q * m0);
                points.push(QqPoint { id: label(r, i), observed: y, position: pos, value: y });
            }
        }
        QqStrategy::A => {
            let vals: Vec<f64> = used
                .iter()
                .map(|&(r, y, m0)| {
                    let u = (set_cdf(f0, &r.truncation, y) / m0).clamp(0.0, 1.0);
                    f0.quantile(u).unwrap_or(f64::NAN)
                })
                .collect();
            let mut sorted = vals.clone();
            sorted.sort_by(f64::total_cmp);
            for (i, (&(r, y, _), &v)) in used.iter().zip(&vals).enumerate() {
                let rank = sorted.partition_point(|&s| s <= v) as f64;
                let pos = f0.quantile(rank / (n + 1.0)).unwrap_or(f64::NAN);
                points.push(QqPoint { id: label(r, i), observed: y, position: pos, value: v });
            }
        }
    }
    Ok(QqData { strategy, points, skipped })
}

fn label(r: &LifetimeRecord, i: usize) -> String {
    if r.id.is_empty() {
        format!("#{i}")
    } else {
        r.id.clone()
    }
}

/// Nonparametric estimate suited to the records: product-limit when every
/// record is left-truncated and right-censored at most, otherwise
/// Turnbull's EM.
pub fn nonparametric_for(records: &[LifetimeRecord]) -> Result<NpEstimate> {
    match kaplan_meier(records) {
        Ok(km) => Ok(km),
        Err(Error::Input(_)) => turnbull_em(records, None, &EmOptions { tol: 1e-8, variance: false, ..Default::default() }),
        Err(e) => Err(e),
    }
}

/// Pointwise bootstrap band on a grid of horizontal positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqBand {
    pub level: f64,
    pub strategy: QqStrategy,
    pub position: Vec<f64>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub seed: u64,
    pub note: String,
}

impl QqBand {
    /// Band (lower, median, upper) at `x`, interpolating linearly between
    /// grid points and holding the end values beyond the grid.
    pub fn at(&self, x: f64) -> (f64, f64, f64) {
        let g = &self.position;
        let k = g.partition_point(|&v| v < x);
        if k == 0 {
            return (self.lower[0], self.median[0], self.upper[0]);
        }
        if k == g.len() {
            let j = g.len() - 1;
            return (self.lower[j], self.median[j], self.upper[j]);
        }
        let w = if g[k] > g[k - 1] { (x - g[k - 1]) / (g[k] - g[k - 1]) } else { 1.0 };
        let lerp = |v: &[f64]| v[k - 1] + w * (v[k] - v[k - 1]);
        (lerp(&self.lower), lerp(&self.median), lerp(&self.upper))
    }

    /// Fraction of points whose value lies inside the band at its position.
    pub fn coverage(&self, points: &[QqPoint]) -> f64 {
        if points.is_empty() {
            return f64::NAN;
        }
        let inside = points
            .iter()
            .filter(|p| {
                let (lo, _, hi) = self.at(p.position);
                p.value >= lo && p.value <= hi
            })
            .count();
        inside as f64 / points.len() as f64
    }
}

const BAND_NOTE: &str = "pointwise empirical quantiles of pooled bootstrap points in a moving window; \
dependence between points of one bootstrap sample is ignored";

/// Parametric-bootstrap pointwise band for a Q-Q plot of `records`
/// (exceedances on the scale of `fit`). Each replicate reuses every
/// record's truncation and censoring, refits the model and the
/// nonparametric estimate, and recomputes the positions. The pooled
/// replicate points are summarized at each original position by the
/// empirical quantiles of the nearest pooled values.
pub fn qq_bootstrap_band(
    fit: &FitResult,
    records: &[LifetimeRecord],
    b: usize,
    level: f64,
    seed: u64,
    strategy: QqStrategy,
) -> Result<QqBand> {
    if !fit.converged {
        return Err(Error::numeric("the fit did not converge; no band"));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::input(format!("level {level} outside [0, 1)")));
    }
    if b == 0 {
        return Err(Error::input("at least one bootstrap replicate is needed"));
    }
    let fn0 = nonparametric_for(records)?;
    let base = qq_positions_truncated(records, &fit.mle, &fn0, strategy)?;
    let reps: Vec<Option<Vec<(f64, f64)>>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let data = simulate_dataset(&fit.mle, records, &mut r).ok()?;
            let refit = fit_exceedances(&fit.spec, &data, &FitOptions::warm(vec![fit.mle.clone()])).ok()?;
            if !refit.loglik.is_finite() {
                return None;
            }
            let fnb = nonparametric_for(&data).ok()?;
            let q = qq_positions_truncated(&data, &refit.mle, &fnb, strategy).ok()?;
            Some(q.points.iter().map(|p| (p.position, p.value)).filter(|p| p.0.is_finite() && p.1.is_finite()).collect())
        })
        .collect();
    let failed = reps.iter().filter(|r| r.is_none()).count();
    if failed as f64 > 0.02 * b as f64 {
        return Err(Error::numeric(format!("{failed} of {b} bootstrap replicates failed")));
    }
    let mut pooled: Vec<(f64, f64)> = reps.into_iter().flatten().flatten().collect();
    if pooled.is_empty() {
        return Err(Error::numeric("bootstrap produced no plotting points"));
    }
    pooled.sort_by(|a, c| a.0.total_cmp(&c.0));
    let xs: Vec<f64> = pooled.iter().map(|p| p.0).collect();

    let mut grid: Vec<f64> = base.points.iter().map(|p| p.position).filter(|v| v.is_finite()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let ok = b - failed;
    let window = ok.max(50).min(pooled.len());
    let alpha = 0.5 * (1.0 - level);
    let mut band = QqBand {
        level,
        strategy,
        position: grid.clone(),
        lower: Vec::with_capacity(grid.len()),
        median: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
        replicates: b,
        failed_replicates: failed,
        seed,
        note: BAND_NOTE.to_string(),
    };
    for &x in &grid {
        let k = xs.partition_point(|&v| v < x);
        let (mut lo, mut hi) = (k, k);
        // Grow the window around x by nearest position.
        while hi - lo < window {
            let take_left = match (lo > 0, hi < xs.len()) {
                (true, true) => (x - xs[lo - 1]) <= (xs[hi] - x),
                (true, false) => true,
                (false, true) => false,
                (false, false) => break,
            };
            if take_left {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let mut vals: Vec<f64> = pooled[lo..hi].iter().map(|p| p.1).collect();
        vals.sort_by(f64::total_cmp);
        band.lower.push(quantile_sorted(&vals, alpha));
        band.median.push(quantile_sorted(&vals, 0.5));
        band.upper.push(quantile_sorted(&vals, 1.0 - alpha));
    }
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Family, ModelSpec};
    use rand::Rng;

    fn exp_records(n: usize, seed: u64) -> Vec<LifetimeRecord> {
        let law = Params::Exponential { sigma: 1.5 };
        law.sample_seeded(n, seed, None)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, t)| LifetimeRecord::untruncated(t).with_id(format!("r{i}")))
            .collect()
    }

    #[test]
    fn no_truncation_gives_classical_positions() {
        let recs = exp_records(50, 1);
        let f0 = Params::Exponential { sigma: 1.3 };
        let fnp = nonparametric_for(&recs).unwrap();
        let a = qq_positions_truncated(&recs, &f0, &fnp, QqStrategy::A).unwrap();
        let b = qq_positions_truncated(&recs, &f0, &fnp, QqStrategy::B).unwrap();
        let mut y: Vec<f64> = recs.iter().map(|r| r.event.support_floor()).collect();
        y.sort_by(f64::total_cmp);
        for (pa, pb) in a.points.iter().zip(&b.points) {
            let rank = y.partition_point(|&v| v <= pa.observed) as f64;
            let classical = f0.quantile(rank / 51.0).unwrap();
            assert!((pa.position - classical).abs() < 1e-12 * classical.max(1.0));
            assert!((pb.position - classical).abs() < 1e-12 * classical.max(1.0));
            assert!((pa.value - pa.observed).abs() < 1e-12 * pa.observed.max(1.0));
            assert_eq!(pb.value, pb.observed);
        }
    }

    #[test]
    fn truncation_breaks_monotonicity() {
        let law = Params::Exponential { sigma: 1.5 };
        let mut r = rng::stream(2, 0);
        let recs: Vec<_> = (0..200)
            .map(|_| {
                let a = r.gen_range(0.0..3.0);
                let b = a + r.gen_range(0.5..3.0);
                let t = law.sample_in_set(&TruncationSet::single(a, b), &mut r).unwrap();
                LifetimeRecord::interval_truncated(t, a, b)
            })
            .collect();
        let fnp = nonparametric_for(&recs).unwrap();
        let q = qq_positions_truncated(&recs, &law, &fnp, QqStrategy::B).unwrap();
        let mut pts: Vec<_> = q.points.iter().map(|p| (p.value, p.position)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pts.windows(2).any(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn zero_level_band_is_the_median() {
        let recs = exp_records(60, 3);
        let fit = fit_exceedances(&ModelSpec::new(Family::Exponential, 0.0), &recs, &FitOptions::default()).unwrap();
        let band = qq_bootstrap_band(&fit, &recs, 40, 0.0, 11, QqStrategy::B).unwrap();
        assert_eq!(band.lower, band.median);
        assert_eq!(band.upper, band.median);
        let wide = qq_bootstrap_band(&fit, &recs, 40, 0.9, 11, QqStrategy::B).unwrap();
        for i in 0..wide.position.len() {
            assert!(wide.lower[i] <= band.lower[i] && wide.upper[i] >= band.upper[i]);
        }
        let again = qq_bootstrap_band(&fit, &recs, 40, 0.9, 11, QqStrategy::B).unwrap();
        assert_eq!(wide, again);
    }
}
