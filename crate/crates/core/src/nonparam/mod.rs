//! Nonparametric lifetime distributions: product-limit under left
//! truncation and right censoring, Turnbull's EM for general interval
//! censoring and truncation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Event, LifetimeRecord};

mod turnbull;

pub use turnbull::{turnbull_em, turnbull_em_traced, turnbull_support, EmOptions, EmTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpMethod {
    ProductLimit,
    Turnbull,
}

/// A discrete lifetime distribution on `support`.
///
/// `survivor[j]` is the probability of surviving past `support[j]`.
/// For the product-limit estimator `variance[j]` is the Greenwood variance
/// of `survivor[j]`; for Turnbull's estimator it is the variance of
/// `mass[j]`, reported only for atoms with positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpEstimate {
    pub method: NpMethod,
    #[serde(with = "inf_vec")]
    pub support: Vec<f64>,
    pub mass: Vec<f64>,
    pub survivor: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
    pub variance: Vec<Option<f64>>,
    /// Product-limit only: number at risk and deaths per atom.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub at_risk: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deaths: Vec<usize>,
    /// Probability left unassigned beyond the last atom.
    pub mass_deficit: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

mod inf_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| if x.is_finite() { Some(*x) } else { None }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

impl NpEstimate {
    /// Survivor probability `P(T > t)`.
    pub fn survivor_at(&self, t: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survivor[k - 1]
        }
    }

    /// Distribution function `P(T <= t)`.
    pub fn cdf_at(&self, t: f64) -> f64 {
        1.0 - self.survivor_at(t)
    }

    /// CSV with columns `support,mass,survivor,cumulative_hazard,variance`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("support,mass,survivor,cumulative_hazard,variance\n");
        for j in 0..self.support.len() {
            let var = self.variance[j].map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.support[j], self.mass[j], self.survivor[j], self.cumulative_hazard[j], var
            ));
        }
        s
    }

    fn from_masses(method: NpMethod, support: Vec<f64>, mass: Vec<f64>) -> NpEstimate {
        let mut survivor = Vec::with_capacity(mass.len());
        let mut cumhaz = Vec::with_capacity(mass.len());
        let mut s = 1.0f64;
        let mut h = 0.0;
        for &m in &mass {
            let hj = if s > 0.0 { (m / s).min(1.0) } else { 0.0 };
            h += hj;
            s = (s - m).max(0.0);
            survivor.push(s);
            cumhaz.push(h);
        }
        let n = support.len();
        NpEstimate {
            method,
            support,
            mass,
            survivor,
            cumulative_hazard: cumhaz,
            variance: vec![None; n],
            at_risk: Vec::new(),
            deaths: Vec::new(),
            mass_deficit: 0.0,
            loglik: 0.0,
            iterations: 0,
            converged: true,
            notes: Vec::new(),
        }
    }
}

/// Entry time and exit time of a record usable by the product-limit
/// estimator, with its status.
fn risk_window(r: &LifetimeRecord) -> Result<(f64, f64, bool)> {
    let iv = r.truncation.intervals();
    let ok_trunc = iv.len() == 1 && (iv[0].upper.is_infinite() || r.censor_at.is_some());
    if !ok_trunc {
        return Err(Error::input(format!(
            "record '{}': product-limit estimation needs left truncation only; use turnbull",
            r.id
        )));
    }
    let a = iv[0].lower;
    match r.event {
        Event::Observed { time } => Ok((a, time, true)),
        Event::RightCensored { time } => Ok((a, time, false)),
        Event::IntervalCensored { .. } => {
            Err(Error::input(format!("record '{}': interval-censored records need turnbull", r.id)))
        }
    }
}

/// Product-limit estimator with hazards `d_j / r_j`, where `r_j` counts
/// records with entry `a_i < t_j <= t_i`, and Greenwood variances
/// `S(t)^2 sum h_j / (r_j (1 - h_j))`.
pub fn kaplan_meier(records: &[LifetimeRecord]) -> Result<NpEstimate> {
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        r.validate()?;
        rows.push(risk_window(r)?);
    }
    let mut times: Vec<f64> = rows.iter().filter(|r| r.2).map(|r| r.1).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut entries: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut exits: Vec<f64> = rows.iter().map(|r| r.1).collect();
    entries.sort_by(f64::total_cmp);
    exits.sort_by(f64::total_cmp);
    let mut deaths_sorted: Vec<f64> = rows.iter().filter(|r| r.2).map(|r| r.1).collect();
    deaths_sorted.sort_by(f64::total_cmp);

    let mut est = NpEstimate::from_masses(NpMethod::ProductLimit, Vec::new(), Vec::new());
    let (mut s, mut h, mut gw) = (1.0f64, 0.0, 0.0);
    let mut ll = 0.0;
    for &t in &times {
        // #{a_i < t} - #{t_i < t}
        let entered = entries.partition_point(|&a| a < t);
        let left = exits.partition_point(|&x| x < t);
        let r = entered.saturating_sub(left);
        let d = deaths_sorted.partition_point(|&x| x <= t) - deaths_sorted.partition_point(|&x| x < t);
        if r == 0 {
            est.notes.push(format!("empty risk set at {t}; deaths there are ignored"));
            continue;
        }
        if s <= 0.0 {
            est.notes.push(format!("risk set exhausted before {t}; estimate terminated"));
            break;
        }
        let hj = d as f64 / r as f64;
        ll += d as f64 * hj.ln() + if hj < 1.0 { (r - d) as f64 * (1.0 - hj).ln() } else { 0.0 };
        let m = s * hj;
        s *= 1.0 - hj;
        h += hj;
        let var = if hj < 1.0 {
            gw += hj / (r as f64 * (1.0 - hj));
            Some(s * s * gw)
        } else {
            gw = f64::INFINITY;
            None
        };
        est.support.push(t);
        est.mass.push(m);
        est.survivor.push(s);
        est.cumulative_hazard.push(h);
        est.variance.push(var.filter(|v| v.is_finite()));
        est.at_risk.push(r);
        est.deaths.push(d);
    }
    est.mass_deficit = s.max(0.0);
    est.loglik = ll;
    Ok(est)
}

/// Covariance of the free masses from the observed information of the
/// truncated multinomial likelihood.
pub(crate) fn mass_covariance(rows: &[(Vec<f64>, Vec<f64>)], mass: &[f64]) -> Option<DMatrix<f64>> {
    let k = mass.len();
    if k < 2 {
        return None;
    }
    // Free coordinates are all atoms but the last; the last is 1 - sum.
    let m = k - 1;
    let mut info = DMatrix::<f64>::zeros(m, m);
    for (c, t) in rows {
        let pc: f64 = c.iter().zip(mass).map(|(a, f)| a * f).sum();
        let pt: f64 = t.iter().zip(mass).map(|(a, f)| a * f).sum();
        let dc: Vec<f64> = (0..m).map(|j| c[j] - c[m]).collect();
        let dt: Vec<f64> = (0..m).map(|j| t[j] - t[m]).collect();
        for i in 0..m {
            for j in 0..m {
                info[(i, j)] += dc[i] * dc[j] / (pc * pc) - dt[i] * dt[j] / (pt * pt);
            }
        }
    }
    let chol = info.cholesky()?;
    let v = chol.inverse();
    let mut full = DMatrix::<f64>::zeros(k, k);
    for i in 0..m {
        for j in 0..m {
            full[(i, j)] = v[(i, j)];
        }
    }
    for i in 0..m {
        let s: f64 = (0..m).map(|j| v[(i, j)]).sum();
        full[(i, m)] = -s;
        full[(m, i)] = -s;
    }
    full[(m, m)] = v.sum();
    Some(full)
}
