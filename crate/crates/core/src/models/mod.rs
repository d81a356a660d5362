//! Parametric lifetime families.
//!
//! All times are excess years above the model threshold. Each family is
//! evaluated through its log survivor and log hazard; densities are formed
//! as `exp(log h + log S)` so that `f = h S` holds to rounding.

mod gp;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::special::{expm1_over, log1p_over, log_diff_exp, log_sum_exp, softplus};
use crate::record::TruncationSet;
use crate::rng;

pub use gp::{gev_rescale, gp_endpoint, gp_threshold_rescale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Exponential,
    Gompertz,
    GompertzMakeham,
    LogisticBeard,
    GenPareto,
    ExtGp,
    WeibullGp,
    PiecewiseGp,
    Gev,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Exponential,
        Family::Gompertz,
        Family::GompertzMakeham,
        Family::LogisticBeard,
        Family::GenPareto,
        Family::ExtGp,
        Family::WeibullGp,
        Family::PiecewiseGp,
        Family::Gev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Gompertz => "gompertz",
            Family::GompertzMakeham => "gompertz_makeham",
            Family::LogisticBeard => "logistic_beard",
            Family::GenPareto => "gen_pareto",
            Family::ExtGp => "ext_gp",
            Family::WeibullGp => "weibull_gp",
            Family::PiecewiseGp => "piecewise_gp",
            Family::Gev => "gev",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::input(format!("unknown family '{s}'")))
    }
}

/// A family plus the absolute age (years) at which excess lifetimes start.
/// Piecewise models also carry their segment knots, in excess years with
/// the first knot at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knots: Vec<f64>,
}

impl ModelSpec {
    pub fn new(family: Family, threshold: f64) -> Self {
        ModelSpec { family, threshold, knots: Vec::new() }
    }

    pub fn piecewise(threshold: f64, knots: Vec<f64>) -> Self {
        ModelSpec { family: Family::PiecewiseGp, threshold, knots }
    }
}

/// Parameter values for one family. Serialized with a `family` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Params {
    Exponential { sigma: f64 },
    Gompertz { sigma: f64, beta: f64 },
    GompertzMakeham { sigma: f64, beta: f64, lambda: f64 },
    /// Hazard `lambda + a exp(gamma t) / (1 + b exp(gamma t))`; `gamma`
    /// plays the role of `beta / sigma`.
    LogisticBeard { lambda: f64, a: f64, b: f64, gamma: f64 },
    GenPareto { sigma: f64, xi: f64 },
    ExtGp { sigma: f64, beta: f64, xi: f64 },
    WeibullGp { sigma: f64, beta: f64, xi: f64 },
    /// Generalized Pareto pieces on `[knots[k], knots[k+1])`, scale
    /// continuous across knots; `sigma` is the scale of the first piece.
    PiecewiseGp { knots: Vec<f64>, sigma: f64, xi: Vec<f64> },
    Gev { eta: f64, tau: f64, xi: f64 },
}

fn finite(v: f64, name: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

fn positive(v: f64, name: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

fn nonneg(v: f64, name: &str) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be nonnegative, got {v}")))
    }
}

/// Log survivor of GP(sigma, xi) at `s >= 0`.
fn gp_log_surv(s: f64, sigma: f64, xi: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if xi == 0.0 {
        return -s / sigma;
    }
    let z = xi * s / sigma;
    if z <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -(s / sigma) * log1p_over(z)
}

/// Inverse of the GP cumulative hazard.
fn gp_inv_cumhaz(e: f64, sigma: f64, xi: f64) -> f64 {
    if e == f64::INFINITY {
        return if xi < 0.0 { -sigma / xi } else { f64::INFINITY };
    }
    if xi == 0.0 {
        return sigma * e;
    }
    let t = sigma * e * expm1_over(xi * e);
    if xi < 0.0 {
        t.min(-sigma / xi)
    } else {
        t
    }
}

/// Segment scales and log masses of a piecewise GP.
struct Pieces {
    scales: Vec<f64>,
    log_mass: Vec<f64>,
}

fn pieces(knots: &[f64], sigma: f64, xi: &[f64]) -> Pieces {
    let k = knots.len();
    let mut scales = Vec::with_capacity(k);
    let mut log_mass = Vec::with_capacity(k);
    let mut s = sigma;
    let mut lp = 0.0;
    for j in 0..k {
        scales.push(s);
        log_mass.push(lp);
        if j + 1 < k {
            let w = knots[j + 1] - knots[j];
            lp += gp_log_surv(w, s, xi[j]);
            s += xi[j] * w;
        }
    }
    Pieces { scales, log_mass }
}

fn segment(knots: &[f64], t: f64) -> usize {
    match knots.iter().rposition(|&u| u <= t) {
        Some(k) => k,
        None => 0,
    }
}

impl Params {
    pub fn family(&self) -> Family {
        match self {
            Params::Exponential { .. } => Family::Exponential,
            Params::Gompertz { .. } => Family::Gompertz,
            Params::GompertzMakeham { .. } => Family::GompertzMakeham,
            Params::LogisticBeard { .. } => Family::LogisticBeard,
            Params::GenPareto { .. } => Family::GenPareto,
            Params::ExtGp { .. } => Family::ExtGp,
            Params::WeibullGp { .. } => Family::WeibullGp,
            Params::PiecewiseGp { .. } => Family::PiecewiseGp,
            Params::Gev { .. } => Family::Gev,
        }
    }

    /// Parameter names in the order used by [`Params::values`].
    pub fn names(&self) -> Vec<String> {
        let fixed: &[&str] = match self {
            Params::Exponential { .. } => &["sigma"],
            Params::Gompertz { .. } => &["sigma", "beta"],
            Params::GompertzMakeham { .. } => &["sigma", "beta", "lambda"],
            Params::LogisticBeard { .. } => &["lambda", "a", "b", "gamma"],
            Params::GenPareto { .. } => &["sigma", "xi"],
            Params::ExtGp { .. } | Params::WeibullGp { .. } => &["sigma", "beta", "xi"],
            Params::Gev { .. } => &["eta", "tau", "xi"],
            Params::PiecewiseGp { xi, .. } => {
                let mut v = vec!["sigma".to_string()];
                v.extend((1..=xi.len()).map(|k| format!("xi{k}")));
                return v;
            }
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    /// Free parameter values (piecewise knots are structural, not free).
    pub fn values(&self) -> Vec<f64> {
        match self {
            Params::Exponential { sigma } => vec![*sigma],
            Params::Gompertz { sigma, beta } => vec![*sigma, *beta],
            Params::GompertzMakeham { sigma, beta, lambda } => vec![*sigma, *beta, *lambda],
            Params::LogisticBeard { lambda, a, b, gamma } => vec![*lambda, *a, *b, *gamma],
            Params::GenPareto { sigma, xi } => vec![*sigma, *xi],
            Params::ExtGp { sigma, beta, xi } | Params::WeibullGp { sigma, beta, xi } => vec![*sigma, *beta, *xi],
            Params::PiecewiseGp { sigma, xi, .. } => {
                let mut v = vec![*sigma];
                v.extend_from_slice(xi);
                v
            }
            Params::Gev { eta, tau, xi } => vec![*eta, *tau, *xi],
        }
    }

    /// Builds parameters of `spec`'s family from free values.
    pub fn from_values(spec: &ModelSpec, v: &[f64]) -> Result<Params> {
        let need = dimension(spec);
        if v.len() != need {
            return Err(Error::input(format!("{} expects {need} parameters, got {}", spec.family, v.len())));
        }
        Ok(match spec.family {
            Family::Exponential => Params::Exponential { sigma: v[0] },
            Family::Gompertz => Params::Gompertz { sigma: v[0], beta: v[1] },
            Family::GompertzMakeham => Params::GompertzMakeham { sigma: v[0], beta: v[1], lambda: v[2] },
            Family::LogisticBeard => Params::LogisticBeard { lambda: v[0], a: v[1], b: v[2], gamma: v[3] },
            Family::GenPareto => Params::GenPareto { sigma: v[0], xi: v[1] },
            Family::ExtGp => Params::ExtGp { sigma: v[0], beta: v[1], xi: v[2] },
            Family::WeibullGp => Params::WeibullGp { sigma: v[0], beta: v[1], xi: v[2] },
            Family::PiecewiseGp => Params::PiecewiseGp { knots: spec.knots.clone(), sigma: v[0], xi: v[1..].to_vec() },
            Family::Gev => Params::Gev { eta: v[0], tau: v[1], xi: v[2] },
        })
    }

    /// Checks the family's constraint set.
    pub fn validate(&self) -> Result<()> {
        match self {
            Params::Exponential { sigma } => positive(*sigma, "sigma"),
            Params::Gompertz { sigma, beta } => {
                positive(*sigma, "sigma")?;
                nonneg(*beta, "beta")
            }
            Params::GompertzMakeham { sigma, beta, lambda } => {
                positive(*sigma, "sigma")?;
                nonneg(*beta, "beta")?;
                nonneg(*lambda, "lambda")
            }
            Params::LogisticBeard { lambda, a, b, gamma } => {
                nonneg(*lambda, "lambda")?;
                positive(*a, "a")?;
                nonneg(*b, "b")?;
                positive(*gamma, "gamma")
            }
            Params::GenPareto { sigma, xi } => {
                positive(*sigma, "sigma")?;
                finite(*xi, "xi")
            }
            Params::ExtGp { sigma, beta, xi } => {
                positive(*sigma, "sigma")?;
                nonneg(*beta, "beta")?;
                finite(*xi, "xi")
            }
            Params::WeibullGp { sigma, beta, xi } => {
                positive(*sigma, "sigma")?;
                positive(*beta, "beta")?;
                finite(*xi, "xi")
            }
            Params::PiecewiseGp { knots, sigma, xi } => {
                positive(*sigma, "sigma")?;
                if knots.is_empty() || knots.len() != xi.len() {
                    return Err(Error::domain("piecewise model needs one shape per knot"));
                }
                if knots[0] != 0.0 {
                    return Err(Error::domain("first piecewise knot must be zero"));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
                    return Err(Error::domain("piecewise knots must be strictly increasing and finite"));
                }
                for (k, x) in xi.iter().enumerate() {
                    finite(*x, &format!("xi{}", k + 1))?;
                }
                let p = pieces(knots, *sigma, xi);
                for (k, s) in p.scales.iter().enumerate() {
                    if !(*s > 0.0) {
                        return Err(Error::domain(format!("piecewise scale of segment {} is {s}, must be positive", k + 1)));
                    }
                }
                Ok(())
            }
            Params::Gev { eta, tau, xi } => {
                finite(*eta, "eta")?;
                positive(*tau, "tau")?;
                finite(*xi, "xi")
            }
        }
    }

    /// Support `(lower, upper)` of the distribution.
    pub fn support(&self) -> (f64, f64) {
        let inf = f64::INFINITY;
        match *self {
            Params::GenPareto { sigma, xi } if xi < 0.0 => (0.0, -sigma / xi),
            Params::ExtGp { sigma, beta, xi } if xi < 0.0 => (0.0, (sigma / -xi) * log1p_over(-beta / xi)),
            Params::WeibullGp { sigma, beta, xi } if xi < 0.0 => (0.0, sigma * (-1.0 / xi).powf(1.0 / beta)),
            Params::PiecewiseGp { ref knots, sigma, ref xi } => {
                let k = knots.len() - 1;
                if xi[k] < 0.0 {
                    let p = pieces(knots, sigma, xi);
                    (0.0, knots[k] + p.scales[k] / -xi[k])
                } else {
                    (0.0, inf)
                }
            }
            Params::Gev { eta, tau, xi } => {
                if xi > 0.0 {
                    (eta - tau / xi, inf)
                } else if xi < 0.0 {
                    (-inf, eta - tau / xi)
                } else {
                    (-inf, inf)
                }
            }
            _ => (0.0, inf),
        }
    }

    /// `log S(t)`: 0 below the support, `-inf` at or beyond its upper end.
    pub fn log_survivor(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t <= lo {
            return 0.0;
        }
        if t >= hi {
            return f64::NEG_INFINITY;
        }
        match *self {
            Params::Exponential { sigma } => -t / sigma,
            Params::Gompertz { sigma, beta } => -(t / sigma) * expm1_over(beta * t / sigma),
            Params::GompertzMakeham { sigma, beta, lambda } => -lambda * t - (t / sigma) * expm1_over(beta * t / sigma),
            Params::LogisticBeard { lambda, a, b, gamma } => -lambda * t - logistic_cumhaz(t, a, b, gamma),
            Params::GenPareto { sigma, xi } => gp_log_surv(t, sigma, xi),
            Params::ExtGp { sigma, beta, xi } => gp_log_surv((t / sigma) * expm1_over(beta * t / sigma), 1.0, xi),
            Params::WeibullGp { sigma, beta, xi } => gp_log_surv((t / sigma).powf(beta), 1.0, xi),
            Params::PiecewiseGp { ref knots, sigma, ref xi } => {
                let p = pieces(knots, sigma, xi);
                let k = segment(knots, t);
                p.log_mass[k] + gp_log_surv(t - knots[k], p.scales[k], xi[k])
            }
            Params::Gev { eta, tau, xi } => {
                let z = gev_z(t, eta, tau, xi);
                (-(-z).exp_m1()).ln()
            }
        }
    }

    pub fn survivor(&self, t: f64) -> f64 {
        self.log_survivor(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        -self.log_survivor(t).exp_m1()
    }

    /// `-log S(t)`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        -self.log_survivor(t)
    }

    /// `log h(t)` without support checks; callers must stay in the support.
    pub fn log_hazard_unchecked(&self, t: f64) -> f64 {
        match *self {
            Params::Exponential { sigma } => -sigma.ln(),
            Params::Gompertz { sigma, beta } => beta * t / sigma - sigma.ln(),
            Params::GompertzMakeham { sigma, beta, lambda } => {
                let g = beta * t / sigma - sigma.ln();
                if lambda == 0.0 {
                    g
                } else {
                    let l = lambda.ln();
                    l.max(g) + (-(l - g).abs()).exp().ln_1p()
                }
            }
            Params::LogisticBeard { lambda, a, b, gamma } => (lambda + a / ((-gamma * t).exp() + b)).ln(),
            Params::GenPareto { sigma, xi } => -(sigma + xi * t).ln(),
            Params::ExtGp { sigma, beta, xi } => {
                let g = (t / sigma) * expm1_over(beta * t / sigma);
                beta * t / sigma - sigma.ln() - (xi * g).ln_1p()
            }
            Params::WeibullGp { sigma, beta, xi } => {
                let r = t / sigma;
                let g = r.powf(beta);
                beta.ln() - sigma.ln() + (beta - 1.0) * r.ln() - (xi * g).ln_1p()
            }
            Params::PiecewiseGp { ref knots, sigma, ref xi } => {
                let p = pieces(knots, sigma, xi);
                let k = segment(knots, t);
                -(p.scales[k] + xi[k] * (t - knots[k])).ln()
            }
            Params::Gev { eta, tau, xi } => gev_log_density(t, eta, tau, xi) - self.log_survivor(t),
        }
    }

    /// `log f(t)` without support checks.
    pub fn log_density_unchecked(&self, t: f64) -> f64 {
        if let Params::Gev { eta, tau, xi } = *self {
            return gev_log_density(t, eta, tau, xi);
        }
        self.log_hazard_unchecked(t) + self.log_survivor(t)
    }

    fn check_support(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.support();
        if t.is_nan() || t < lo || t >= hi {
            return Err(Error::domain(format!("t = {t} outside the support [{lo}, {hi}) of {}", self.family())));
        }
        Ok(())
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        self.check_support(t)?;
        let h = self.log_hazard_unchecked(t).exp();
        if !h.is_finite() {
            return Err(Error::domain(format!("hazard of {} undefined at t = {t}", self.family())));
        }
        Ok(h)
    }

    pub fn log_density(&self, t: f64) -> Result<f64> {
        self.check_support(t)?;
        let v = self.log_density_unchecked(t);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::domain(format!("density of {} undefined at t = {t}", self.family())));
        }
        Ok(v)
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        self.log_density(t).map(f64::exp)
    }

    /// Smallest `t` with cumulative hazard `-log S(t) = e`.
    pub fn inverse_cumulative_hazard(&self, e: f64) -> f64 {
        let (lo, hi) = self.support();
        if e <= 0.0 {
            return lo;
        }
        if e == f64::INFINITY {
            return hi;
        }
        match *self {
            Params::Exponential { sigma } => sigma * e,
            Params::Gompertz { sigma, beta } => sigma * e * log1p_over(beta * e),
            Params::GenPareto { sigma, xi } => gp_inv_cumhaz(e, sigma, xi),
            Params::ExtGp { sigma, beta, xi } => {
                let g = gp_inv_cumhaz(e, 1.0, xi);
                (sigma * g * log1p_over(beta * g)).min(hi)
            }
            Params::WeibullGp { sigma, beta, xi } => (sigma * gp_inv_cumhaz(e, 1.0, xi).powf(1.0 / beta)).min(hi),
            Params::PiecewiseGp { ref knots, sigma, ref xi } => {
                let p = pieces(knots, sigma, xi);
                let k = p.log_mass.iter().rposition(|&lm| -lm <= e).unwrap_or(0);
                (knots[k] + gp_inv_cumhaz(e + p.log_mass[k], p.scales[k], xi[k])).min(hi)
            }
            Params::Gev { eta, tau, xi } => {
                // S = 1 - exp(-z)  =>  z = -log(1 - e^{-e})
                let z = -(-(-e).exp_m1()).ln();
                let lz = z.ln();
                let y = if xi == 0.0 { -lz } else { -lz * expm1_over(-xi * lz) };
                (eta + tau * y).clamp(lo, hi)
            }
            Params::GompertzMakeham { sigma, beta, lambda } => {
                let mut hi = sigma * e * log1p_over(beta * e);
                if lambda > 0.0 {
                    hi = hi.min(e / lambda);
                }
                self.solve_cumhaz(e, hi)
            }
            Params::LogisticBeard { lambda, a, b, .. } => {
                // Hazard is at least min(lambda + a/(1+b), ...) > 0 and
                // bounded below by lambda + a/(1+b) for t >= 0.
                let floor = lambda + a / (1.0 + b);
                self.solve_cumhaz(e, e / floor)
            }
        }
    }

    /// Safeguarded Newton for `H(t) = e` on `[0, hi]` with `H(hi) >= e`.
    fn solve_cumhaz(&self, e: f64, hi: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, hi);
        let mut t = 0.5 * hi;
        for _ in 0..200 {
            let g = self.cumulative_hazard(t) - e;
            if g == 0.0 {
                return t;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let step = g / self.log_hazard_unchecked(t).exp();
            let mut next = t - step;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-15 * t.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
                return next;
            }
            t = next;
        }
        t
    }

    /// Quantile function, `S(q) = 1 - p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("probability {p} outside (0, 1)")));
        }
        Ok(self.inverse_cumulative_hazard(-(-p).ln_1p()))
    }

    /// `log P(lo <= T <= hi)`.
    pub fn log_prob_interval(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return f64::NEG_INFINITY;
        }
        log_diff_exp(self.log_survivor(lo), self.log_survivor(hi))
    }

    /// `log P(T in set)`.
    pub fn log_prob_set(&self, set: &TruncationSet) -> f64 {
        match set.intervals() {
            [] => f64::NEG_INFINITY,
            [one] => self.log_prob_interval(one.lower, one.upper),
            many => {
                let parts: Vec<f64> = many.iter().map(|i| self.log_prob_interval(i.lower, i.upper)).collect();
                log_sum_exp(&parts)
            }
        }
    }

    /// Draws one lifetime restricted to `set` by inversion, using two
    /// uniforms: one picks the interval, one the position within it.
    pub fn sample_in_set<R: Rng + ?Sized>(&self, set: &TruncationSet, rng: &mut R) -> Result<f64> {
        let ivs = set.intervals();
        let mut lm: Vec<f64> = Vec::with_capacity(ivs.len());
        for iv in ivs {
            lm.push(self.log_prob_interval(iv.lower, iv.upper));
        }
        let total = log_sum_exp(&lm);
        if !(total >= (1e-12f64).ln()) {
            return Err(Error::domain(format!("truncation set has model probability {:e} < 1e-12", total.exp())));
        }
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let mut k = ivs.len() - 1;
        let mut acc = 0.0;
        for (j, l) in lm.iter().enumerate() {
            acc += (l - total).exp();
            if u1 < acc {
                k = j;
                break;
            }
        }
        let iv = ivs[k];
        let ls_lo = self.log_survivor(iv.lower);
        let ls_hi = self.log_survivor(iv.upper);
        // S(t) = S(lo) - u (S(lo) - S(hi)), in logs.
        let frac = -(ls_hi - ls_lo).exp_m1();
        let target = ls_lo + (-u2 * frac).ln_1p();
        Ok(self.inverse_cumulative_hazard(-target).clamp(iv.lower, iv.upper))
    }

    /// `n` draws, optionally restricted to a truncation set.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, truncation: Option<&TruncationSet>) -> Result<Vec<f64>> {
        self.validate()?;
        match truncation {
            Some(set) => (0..n).map(|_| self.sample_in_set(set, rng)).collect(),
            None => {
                if let Params::PiecewiseGp { knots, sigma, xi } = self {
                    return Ok((0..n).map(|_| sample_piecewise(knots, *sigma, xi, rng)).collect());
                }
                Ok((0..n)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        // -log(1 - u) with u in [0, 1) is a unit exponential.
                        self.inverse_cumulative_hazard(-(-u).ln_1p())
                    })
                    .collect())
            }
        }
    }

    /// Reproducible sample from stream 0 of `seed`.
    pub fn sample_seeded(&self, n: usize, seed: u64, truncation: Option<&TruncationSet>) -> Result<Vec<f64>> {
        let mut r = rng::stream(seed, 0);
        self.sample(n, &mut r, truncation)
    }

    /// Derivative at `u` of the reciprocal hazard `1/h`.
    pub fn penultimate_shape(&self, u: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(u >= lo && u < hi) || (u <= 0.0 && matches!(self, Params::WeibullGp { .. })) {
            return Err(Error::domain(format!("u = {u} not in the support interior")));
        }
        Ok(match *self {
            Params::Exponential { .. } => 0.0,
            Params::Gompertz { sigma, beta } => -beta * (-beta * u / sigma).exp(),
            Params::GompertzMakeham { sigma, beta, lambda } => {
                let e = (-beta * u / sigma).exp();
                let d = 1.0 + lambda * sigma * e;
                -beta * e / (d * d)
            }
            Params::GenPareto { xi, .. } => xi,
            Params::ExtGp { sigma, beta, xi } => (xi - beta) * (-beta * u / sigma).exp(),
            Params::WeibullGp { sigma, beta, xi } => {
                let g = (u / sigma).powf(beta);
                (xi * g - beta + 1.0) / (beta * g)
            }
            Params::PiecewiseGp { ref knots, ref xi, .. } => xi[segment(knots, u)],
            Params::LogisticBeard { .. } => {
                let step = 1e-5 * u.abs().max(1.0);
                let r = |t: f64| (-self.log_hazard_unchecked(t)).exp();
                if u - step >= 0.0 {
                    (r(u + step) - r(u - step)) / (2.0 * step)
                } else {
                    (r(u + step) - r(u)) / step
                }
            }
            Params::Gev { .. } => {
                return Err(Error::domain("penultimate shape is not defined for the GEV family"));
            }
        })
    }
}

/// Free-parameter count of a model.
pub fn dimension(spec: &ModelSpec) -> usize {
    match spec.family {
        Family::Exponential => 1,
        Family::Gompertz | Family::GenPareto => 2,
        Family::GompertzMakeham | Family::ExtGp | Family::WeibullGp | Family::Gev => 3,
        Family::LogisticBeard => 4,
        Family::PiecewiseGp => 1 + spec.knots.len(),
    }
}

/// Logistic cumulative hazard without the constant term:
/// `(a / (b gamma)) log{(1 + b e^{gamma t}) / (1 + b)}`.
fn logistic_cumhaz(t: f64, a: f64, b: f64, gamma: f64) -> f64 {
    let x = gamma * t;
    if b > 0.0 && x > 30.0 {
        return (a / (b * gamma)) * (softplus(b.ln() + x) - b.ln_1p());
    }
    let z = b * x.exp_m1() / (1.0 + b);
    (a * t / (1.0 + b)) * expm1_over(x) * log1p_over(z)
}

fn gev_z(t: f64, eta: f64, tau: f64, xi: f64) -> f64 {
    let y = (t - eta) / tau;
    if xi == 0.0 {
        (-y).exp()
    } else {
        (-(xi * y).ln_1p() / xi).exp()
    }
}

fn gev_log_density(t: f64, eta: f64, tau: f64, xi: f64) -> f64 {
    let y = (t - eta) / tau;
    if xi == 0.0 {
        return -tau.ln() - y - (-y).exp();
    }
    let l = (xi * y).ln_1p();
    if l.is_nan() || l == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    -tau.ln() - (1.0 / xi + 1.0) * l - (-l / xi).exp()
}

fn sample_piecewise<R: Rng + ?Sized>(knots: &[f64], sigma: f64, xi: &[f64], rng: &mut R) -> f64 {
    let p = pieces(knots, sigma, xi);
    let k = knots.len();
    // Segment k has mass p_k - p_{k+1}.
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut seg = k - 1;
    for j in 0..k {
        let upper = if j + 1 < k { p.log_mass[j + 1].exp() } else { 0.0 };
        acc += p.log_mass[j].exp() - upper;
        if u < acc {
            seg = j;
            break;
        }
    }
    let width = if seg + 1 < k { knots[seg + 1] - knots[seg] } else { f64::INFINITY };
    let ls_hi = gp_log_surv(width, p.scales[seg], xi[seg]);
    let v: f64 = rng.gen();
    let target = (-v * -ls_hi.exp_m1()).ln_1p();
    let s = gp_inv_cumhaz(-target, p.scales[seg], xi[seg]);
    knots[seg] + s.min(width)
}

#[cfg(test)]
mod tests;
