//! Posterior sampling under maximal data information priors by the
//! ratio-of-uniforms method.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit_exceedances, loglik_exceedances, FitOptions};
use crate::models::{Family, ModelSpec, Params};
use crate::numeric::optim::{bfgs, fd_hessian, nelder_mead, BfgsOptions, NelderMeadOptions};
use crate::numeric::special::exp_e1;
use crate::numeric::stats::quantile_sorted;
use crate::record::{exceedances, LifetimeRecord};
use crate::rng;

/// Log MDI prior density, up to an additive constant.
///
/// Exponential `-ln sigma`; generalized Pareto `-ln sigma - xi - 1`,
/// truncated to `xi >= -1`; Gompertz `-ln sigma + e^{1/beta} E1(1/beta)`.
/// Returns `-inf` outside the support of the prior.
pub fn mdi_log_prior(p: &Params) -> Result<f64> {
    Ok(match *p {
        Params::Exponential { sigma } => {
            if sigma > 0.0 {
                -sigma.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        Params::GenPareto { sigma, xi } => {
            if sigma > 0.0 && xi >= -1.0 {
                -sigma.ln() - xi - 1.0
            } else {
                f64::NEG_INFINITY
            }
        }
        Params::Gompertz { sigma, beta } => {
            if !(sigma > 0.0 && beta >= 0.0) {
                f64::NEG_INFINITY
            } else if beta == 0.0 {
                -sigma.ln()
            } else {
                -sigma.ln() + exp_e1(1.0 / beta)
            }
        }
        _ => return Err(Error::input(format!("no MDI prior for the {} family", p.family()))),
    })
}

/// Draws from a ratio-of-uniforms sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouSample {
    pub draws: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub mode: Vec<f64>,
    pub acceptance_rate: f64,
    pub proposals: usize,
    pub seed: u64,
}

const CHUNK: usize = 1024;

struct Envelope {
    mode: Vec<f64>,
    lmax: f64,
    /// Lower Cholesky factor of the Laplace covariance.
    chol: DMatrix<f64>,
    v_lo: Vec<f64>,
    v_hi: Vec<f64>,
}

fn maximize<F: Fn(&[f64]) -> f64>(f: F, start: &[f64]) -> (Vec<f64>, f64) {
    let neg = |x: &[f64]| -f(x);
    let nm = nelder_mead(neg, start, NelderMeadOptions { max_iter: 4000, initial_step: 0.5, ..Default::default() });
    let bf = bfgs(neg, &nm.x, BfgsOptions::default());
    if bf.value <= nm.value {
        (bf.x, -bf.value)
    } else {
        (nm.x, -nm.value)
    }
}

fn laplace_cholesky<F: Fn(&[f64]) -> f64>(f: &F, mode: &[f64]) -> DMatrix<f64> {
    let d = mode.len();
    let mut neg = |x: &[f64]| -f(x);
    let h = fd_hessian(&mut neg, mode);
    let hm = DMatrix::from_fn(d, d, |i, j| h[i][j]);
    if let Some(c) = hm.clone().cholesky() {
        if let Some(c2) = c.inverse().cholesky() {
            return c2.l();
        }
    }
    // Fall back to per-axis scaling.
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            let v = hm[(i, i)];
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        } else {
            0.0
        }
    })
}

impl Envelope {
    fn x_of(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        (0..d).map(|i| self.mode[i] + (0..=i).map(|j| self.chol[(i, j)] * z[j]).sum::<f64>()).collect()
    }

    fn build<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64]) -> Result<Envelope> {
        let d = start.len();
        if !f(start).is_finite() {
            return Err(Error::input("log density is not finite at the starting point"));
        }
        let (mode, lmax) = maximize(f, start);
        if !lmax.is_finite() {
            return Err(Error::numeric("could not locate the posterior mode"));
        }
        let chol = laplace_cholesky(f, &mode);
        let mut env = Envelope { mode, lmax, chol, v_lo: vec![0.0; d], v_hi: vec![0.0; d] };
        let k = (d + 1) as f64;
        let lg = |z: &[f64]| f(&env.x_of(z)) - env.lmax;
        let mut bounds = vec![(0.0, 0.0); d];
        for (i, b) in bounds.iter_mut().enumerate() {
            for sign in [1.0f64, -1.0] {
                let obj = |z: &[f64]| {
                    let zi = sign * z[i];
                    if zi <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    zi.ln() + lg(z) / k
                };
                let mut z0 = vec![0.0; d];
                z0[i] = sign * k.sqrt();
                let (z, v) = maximize(obj, &z0);
                let far = z.iter().any(|v| !v.is_finite() || v.abs() > 1e8);
                if !v.is_finite() || far {
                    return Err(Error::numeric("posterior not RoU-compatible; reparameterize"));
                }
                let ext = sign * v.exp();
                if sign > 0.0 {
                    b.1 = ext;
                } else {
                    b.0 = ext;
                }
            }
        }
        // A hair of slack guards against optimizer shortfall.
        const SLACK: f64 = 1.0 + 1e-6;
        env.v_lo = bounds.iter().map(|b| b.0 * SLACK).collect();
        env.v_hi = bounds.iter().map(|b| b.1 * SLACK).collect();
        Ok(env)
    }
}

/// Ratio-of-uniforms sampling from an unnormalized log density, after
/// relocating to its mode and rotating by the Cholesky factor of the
/// Laplace covariance. The bounding box comes from numerical maximization
/// of `g^{1/(d+1)}` and `z_i g^{1/(d+1)}`. Draws are exact and i.i.d.
///
/// Draws are produced in chunks; chunk `k` uses random stream `k` of
/// `seed`, so output is independent of thread count.
pub fn rou_sample<F: Fn(&[f64]) -> f64 + Sync>(log_density: F, start: &[f64], n: usize, seed: u64) -> Result<RouSample> {
    if start.is_empty() {
        return Err(Error::input("dimension must be positive"));
    }
    let env = Envelope::build(&log_density, start)?;
    if n == 0 {
        return Ok(RouSample {
            draws: Vec::new(),
            log_density: Vec::new(),
            mode: env.mode,
            acceptance_rate: 0.0,
            proposals: 0,
            seed,
        });
    }
    let d = start.len();
    let k = (d + 1) as f64;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<(Vec<(Vec<f64>, f64)>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let want = CHUNK.min(n - c * CHUNK);
            let mut r = rng::stream(seed, c as u64);
            let mut out = Vec::with_capacity(want);
            let mut tried = 0usize;
            let mut z = vec![0.0; d];
            while out.len() < want {
                tried += 1;
                let u: f64 = 1.0 - r.gen::<f64>();
                for i in 0..d {
                    z[i] = (env.v_lo[i] + (env.v_hi[i] - env.v_lo[i]) * r.gen::<f64>()) / u;
                }
                let x = env.x_of(&z);
                let l = log_density(&x);
                if l.is_finite() && k * u.ln() <= l - env.lmax {
                    out.push((x, l));
                }
            }
            (out, tried)
        })
        .collect();
    let mut draws = Vec::with_capacity(n);
    let mut lds = Vec::with_capacity(n);
    let mut proposals = 0;
    for (chunk, tried) in parts {
        proposals += tried;
        for (x, l) in chunk {
            draws.push(x);
            lds.push(l);
        }
    }
    Ok(RouSample { draws, log_density: lds, mode: env.mode, acceptance_rate: n as f64 / proposals as f64, proposals, seed })
}

/// Posterior draws for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    /// One row per draw, on the natural parameter scale.
    pub draws: Vec<Vec<f64>>,
    /// Log-likelihood plus log-prior per draw.
    pub log_posterior: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub n_used: usize,
}

impl PosteriorSample {
    pub fn params(&self) -> Result<Vec<Params>> {
        self.draws.iter().map(|v| Params::from_values(&self.spec, v)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.names.join(",");
        s.push_str(",log_posterior\n");
        for (row, lp) in self.draws.iter().zip(&self.log_posterior) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push_str(&format!(",{lp}\n"));
        }
        s
    }

    /// Posterior mean, standard deviation and quartiles per parameter.
    pub fn summary(&self) -> Vec<ParamSummary> {
        (0..self.names.len())
            .map(|i| {
                let mut col: Vec<f64> = self.draws.iter().map(|r| r[i]).collect();
                col.sort_by(f64::total_cmp);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                ParamSummary {
                    name: self.names[i].clone(),
                    mean,
                    sd,
                    q25: quantile_sorted(&col, 0.25),
                    median: quantile_sorted(&col, 0.5),
                    q75: quantile_sorted(&col, 0.75),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Sampling coordinates: log scale, log rate of ageing, raw shape.
fn to_working(p: &Params) -> Vec<f64> {
    match *p {
        Params::Exponential { sigma } => vec![sigma.ln()],
        Params::Gompertz { sigma, beta } => vec![sigma.ln(), beta.max(1e-6).ln()],
        Params::GenPareto { sigma, xi } => vec![sigma.ln(), xi.max(-0.99)],
        _ => unreachable!(),
    }
}

/// Natural parameters and the log Jacobian of the map from working ones.
fn from_working(family: Family, w: &[f64]) -> (Params, f64) {
    match family {
        Family::Exponential => (Params::Exponential { sigma: w[0].exp() }, w[0]),
        Family::Gompertz => (Params::Gompertz { sigma: w[0].exp(), beta: w[1].exp() }, w[0] + w[1]),
        Family::GenPareto => (Params::GenPareto { sigma: w[0].exp(), xi: w[1] }, w[0]),
        _ => unreachable!(),
    }
}

/// Draws `n` values from the posterior of `spec` given the exceedances of
/// its threshold, under the MDI prior and the truncation- and
/// censoring-aware likelihood.
pub fn posterior_sample(spec: &ModelSpec, records: &[LifetimeRecord], n: usize, seed: u64) -> Result<PosteriorSample> {
    let family = spec.family;
    if !matches!(family, Family::Exponential | Family::Gompertz | Family::GenPareto) {
        return Err(Error::input(format!("posterior sampling is not available for the {family} family")));
    }
    for r in records {
        r.validate()?;
    }
    let ex = exceedances(records, spec.threshold)?.records;
    if ex.is_empty() {
        return Err(Error::input("no records above the threshold"));
    }
    let log_post = |w: &[f64]| {
        if w.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let (p, jac) = from_working(family, w);
        let prior = mdi_log_prior(&p).unwrap_or(f64::NEG_INFINITY);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        let ll = loglik_exceedances(&p, &ex);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll + prior + jac
        }
    };
    let start = match fit_exceedances(spec, &ex, &FitOptions::quick()) {
        Ok(f) if log_post(&to_working(&f.mle)).is_finite() => to_working(&f.mle),
        _ => {
            let m = ex.iter().map(|r| r.event.support_floor()).sum::<f64>() / ex.len() as f64;
            let base = match family {
                Family::Exponential => Params::Exponential { sigma: m.max(1e-3) },
                Family::Gompertz => Params::Gompertz { sigma: m.max(1e-3), beta: 0.1 },
                _ => Params::GenPareto { sigma: m.max(1e-3), xi: 0.0 },
            };
            to_working(&base)
        }
    };
    let rs = rou_sample(log_post, &start, n, seed)?;
    let draws = rs.draws.iter().map(|w| from_working(family, w).0.values()).collect();
    let log_posterior = rs
        .draws
        .iter()
        .zip(&rs.log_density)
        .map(|(w, l)| l - from_working(family, w).1)
        .collect();
    let names = match family {
        Family::Exponential => vec!["sigma".to_string()],
        Family::Gompertz => vec!["sigma".into(), "beta".into()],
        _ => vec!["sigma".into(), "xi".into()],
    };
    Ok(PosteriorSample {
        spec: spec.clone(),
        names,
        draws,
        log_posterior,
        acceptance_rate: rs.acceptance_rate,
        seed,
        n_used: ex.len(),
    })
}

/// Pointwise posterior summary of the hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardBand {
    pub level: f64,
    pub t: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Number of draws whose support ends before each grid point; their
    /// hazard there counts as infinite.
    pub beyond_support: Vec<usize>,
}

impl HazardBand {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,median,lo,hi\n");
        for i in 0..self.t.len() {
            s.push_str(&format!("{},{},{},{}\n", self.t[i], self.median[i], self.lower[i], self.upper[i]));
        }
        s
    }
}

/// Median and central `level` interval of the hazard over posterior draws
/// at each point of `t_grid` (excess times).
pub fn posterior_hazard_band(draws: &[Params], t_grid: &[f64], level: f64) -> Result<HazardBand> {
    if draws.is_empty() {
        return Err(Error::input("no posterior draws"));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::input(format!("level {level} outside [0, 1)")));
    }
    let mut band = HazardBand {
        level,
        t: t_grid.to_vec(),
        median: Vec::with_capacity(t_grid.len()),
        lower: Vec::with_capacity(t_grid.len()),
        upper: Vec::with_capacity(t_grid.len()),
        beyond_support: Vec::with_capacity(t_grid.len()),
    };
    let alpha = 0.5 * (1.0 - level);
    for &t in t_grid {
        let mut beyond = 0;
        let mut h: Vec<f64> = draws
            .iter()
            .map(|p| {
                if t >= p.support().1 {
                    beyond += 1;
                    f64::INFINITY
                } else {
                    p.hazard(t).unwrap_or(f64::INFINITY)
                }
            })
            .collect();
        h.sort_by(f64::total_cmp);
        band.median.push(quantile_sorted(&h, 0.5));
        band.lower.push(quantile_sorted(&h, alpha));
        band.upper.push(quantile_sorted(&h, 1.0 - alpha));
        band.beyond_support.push(beyond);
    }
    Ok(band)
}
