use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::loglik_exceedances;
use crate::error::{Error, Result};
use crate::models::{dimension, gp_endpoint, Family, ModelSpec, Params};
use crate::numeric::optim::{bfgs, fd_gradient, fd_hessian, nelder_mead, newton_polish, BfgsOptions, NelderMeadOptions};
use crate::numeric::stats::{mean, variance};
use crate::record::{exceedances, LifetimeRecord};

/// Maps between a free parameter and its unconstrained working value.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    /// Positive parameter, `p = exp(theta)`.
    Log,
    /// Nonnegative parameter, `p = theta^2`; zero is attainable.
    Square,
    /// Unconstrained (shape parameters).
    Raw,
}

impl Transform {
    fn forward(self, theta: f64) -> f64 {
        match self {
            Transform::Log => theta.exp(),
            Transform::Square => theta * theta,
            Transform::Raw => theta,
        }
    }

    fn inverse(self, p: f64) -> f64 {
        match self {
            Transform::Log => p.ln(),
            Transform::Square => p.max(0.0).sqrt(),
            Transform::Raw => p,
        }
    }

    fn derivative(self, theta: f64) -> f64 {
        match self {
            Transform::Log => theta.exp(),
            Transform::Square => 2.0 * theta,
            Transform::Raw => 1.0,
        }
    }
}

fn transforms(spec: &ModelSpec) -> Vec<Transform> {
    use Transform::*;
    match spec.family {
        Family::Exponential => vec![Log],
        Family::Gompertz => vec![Log, Square],
        Family::GompertzMakeham => vec![Log, Square, Square],
        Family::LogisticBeard => vec![Square, Log, Square, Log],
        Family::GenPareto => vec![Log, Raw],
        Family::ExtGp => vec![Log, Square, Raw],
        Family::WeibullGp => vec![Log, Log, Raw],
        Family::PiecewiseGp => {
            let mut v = vec![Log];
            v.extend(std::iter::repeat(Raw).take(spec.knots.len()));
            v
        }
        Family::Gev => vec![Raw, Log, Raw],
    }
}

/// Positions of GP-type shape parameters, which are kept at or above -1.
fn shape_indices(spec: &ModelSpec) -> Vec<usize> {
    match spec.family {
        Family::GenPareto => vec![1],
        Family::ExtGp | Family::WeibullGp => vec![2],
        Family::PiecewiseGp => (1..=spec.knots.len()).collect(),
        _ => Vec::new(),
    }
}

const SHAPE_FLOOR: f64 = -1.0;

struct Problem<'a> {
    spec: &'a ModelSpec,
    records: &'a [LifetimeRecord],
    tr: Vec<Transform>,
    shapes: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a ModelSpec, records: &'a [LifetimeRecord]) -> Self {
        Problem { spec, records, tr: transforms(spec), shapes: shape_indices(spec) }
    }

    fn values(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.tr).map(|(t, tr)| tr.forward(*t)).collect()
    }

    fn params(&self, theta: &[f64]) -> Option<Params> {
        let v = self.values(theta);
        if self.shapes.iter().any(|&i| v[i] < SHAPE_FLOOR) {
            return None;
        }
        let p = Params::from_values(self.spec, &v).ok()?;
        p.validate().ok()?;
        Some(p)
    }

    fn theta(&self, p: &Params) -> Vec<f64> {
        p.values().iter().zip(&self.tr).map(|(v, tr)| tr.inverse(*v)).collect()
    }

    /// Negative log-likelihood on the working scale.
    fn objective(&self, theta: &[f64]) -> f64 {
        match self.params(theta) {
            Some(p) => {
                let l = loglik_exceedances(&p, self.records);
                if l.is_finite() {
                    -l
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        }
    }
}

/// How much work a fit does.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Use the five built-in starting points.
    pub multistart: bool,
    /// Run a simplex search before the quasi-Newton stage.
    pub simplex: bool,
    /// Finish with damped Newton steps.
    pub polish: bool,
    /// Compute the observed information and standard errors.
    pub information: bool,
    /// Additional starting points.
    pub starts: Vec<Params>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { multistart: true, simplex: true, polish: true, information: true, starts: Vec::new() }
    }
}

impl FitOptions {
    /// Quasi-Newton only from the given starts; for refits inside
    /// resampling loops where a nearby optimum is already known.
    pub fn warm(starts: Vec<Params>) -> Self {
        FitOptions { multistart: false, simplex: false, polish: false, information: false, starts }
    }

    /// One built-in start, no simplex stage.
    pub fn quick() -> Self {
        FitOptions { multistart: false, simplex: false, polish: true, information: true, starts: Vec::new() }
    }
}

/// Maximum likelihood fit of one model to one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub mle: Params,
    pub loglik: f64,
    /// Observed information on the natural parameter scale; absent when the
    /// optimum is on the boundary or the Hessian is not positive definite.
    pub observed_information: Option<Vec<Vec<f64>>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Standard errors in [`Params::names`] order; `None` for parameters on
    /// the boundary or when the information is singular.
    pub std_errors: Vec<Option<f64>>,
    pub converged: bool,
    /// Some parameter sits on the edge of its constraint set.
    pub boundary: bool,
    pub gradient_norm: f64,
    pub evaluations: usize,
    pub n_used: usize,
    pub ties_excluded: usize,
    pub threshold: f64,
}

impl FitResult {
    pub fn names(&self) -> Vec<String> {
        self.mle.names()
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        let i = self.names().iter().position(|n| n == name)?;
        Some(self.mle.values()[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.names().iter().position(|n| n == name)?;
        self.std_errors[i]
    }

    /// Upper endpoint (absolute age) for generalized Pareto fits.
    pub fn endpoint(&self) -> Option<f64> {
        match self.mle {
            Params::GenPareto { sigma, xi } => Some(gp_endpoint(self.threshold, sigma, xi)),
            _ => None,
        }
    }

    /// Aligned text table of estimates.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "family {}  threshold {}  n_u {}  loglik {:.4}  converged {}{}\n",
            self.spec.family,
            self.threshold,
            self.n_used,
            self.loglik,
            self.converged,
            if self.boundary { "  (boundary)" } else { "" }
        );
        s.push_str(&format!("{:<10} {:>14} {:>12}\n", "parameter", "estimate", "std.error"));
        for ((n, v), se) in self.names().iter().zip(self.mle.values()).zip(&self.std_errors) {
            let se = se.map_or("-".to_string(), |x| format!("{x:.6}"));
            s.push_str(&format!("{n:<10} {v:>14.6} {se:>12}\n"));
        }
        if let Some(psi) = self.endpoint() {
            s.push_str(&format!("{:<10} {:>14.6}\n", "endpoint", psi));
        }
        s
    }
}

/// Crude location/scale summary used to build starting values.
fn data_scale(records: &[LifetimeRecord]) -> (f64, f64) {
    let x: Vec<f64> = records.iter().map(|r| r.event.support_floor()).filter(|v| v.is_finite()).collect();
    if x.is_empty() {
        return (1.0, 1.0);
    }
    let m = mean(&x);
    let sd = if x.len() > 1 { variance(&x).sqrt() } else { m.abs() };
    (m, sd.max(1e-3))
}

fn base_start(spec: &ModelSpec, records: &[LifetimeRecord]) -> Params {
    let (m, sd) = data_scale(records);
    let s = m.max(1e-3);
    match spec.family {
        Family::Exponential => Params::Exponential { sigma: s },
        Family::Gompertz => Params::Gompertz { sigma: s, beta: 0.1 },
        Family::GompertzMakeham => Params::GompertzMakeham { sigma: 2.0 * s, beta: 0.1, lambda: 0.5 / s },
        Family::LogisticBeard => Params::LogisticBeard { lambda: 0.1 / s, a: 0.9 / s, b: 0.1, gamma: 0.1 / s },
        Family::GenPareto => Params::GenPareto { sigma: s, xi: -0.05 },
        Family::ExtGp => Params::ExtGp { sigma: s, beta: 0.1, xi: -0.05 },
        Family::WeibullGp => Params::WeibullGp { sigma: s, beta: 1.0, xi: -0.05 },
        Family::PiecewiseGp => Params::PiecewiseGp { knots: spec.knots.clone(), sigma: s, xi: vec![0.0; spec.knots.len()] },
        Family::Gev => Params::Gev { eta: m - 0.45 * sd, tau: 0.78 * sd, xi: 0.0 },
    }
}

/// Five deterministic starts on the working scale.
fn default_starts(pb: &Problem, base: &[f64]) -> Vec<Vec<f64>> {
    const LOG_SHIFT: [f64; 5] = [0.0, -0.7, 0.7, 0.0, 0.3];
    const SHAPE_SHIFT: [f64; 5] = [0.0, 0.0, 0.0, 0.2, -0.2];
    const SQ_VALUE: [f64; 5] = [1.0, 1.0, 1.0, 3.0, 0.3];
    (0..5)
        .map(|k| {
            base.iter()
                .zip(&pb.tr)
                .map(|(&t, tr)| match tr {
                    Transform::Log => t + LOG_SHIFT[k],
                    Transform::Square => t * SQ_VALUE[k].sqrt(),
                    Transform::Raw => t + SHAPE_SHIFT[k],
                })
                .collect()
        })
        .collect()
}

/// Fits `spec` to records already expressed relative to its threshold.
pub fn fit_exceedances(spec: &ModelSpec, records: &[LifetimeRecord], opts: &FitOptions) -> Result<FitResult> {
    if spec.family == Family::PiecewiseGp && (spec.knots.is_empty() || spec.knots[0] != 0.0) {
        return Err(Error::input("piecewise model needs knots starting at zero"));
    }
    let pb = Problem::new(spec, records);
    let dim = dimension(spec);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if opts.multistart || opts.starts.is_empty() {
        let base = pb.theta(&base_start(spec, records));
        if opts.multistart {
            starts.extend(default_starts(&pb, &base));
        } else {
            starts.push(base);
        }
    }
    // Exact user starts are candidates as given; a copy nudged off any zero
    // of a squared parameter lets the search move away from the boundary.
    let mut exact: Vec<Vec<f64>> = Vec::new();
    for p in &opts.starts {
        if p.family() != spec.family {
            return Err(Error::input(format!("start for {} given to a {} fit", p.family(), spec.family)));
        }
        let th = pb.theta(p);
        let nudged: Vec<f64> =
            th.iter().zip(&pb.tr).map(|(&t, tr)| if *tr == Transform::Square && t < 0.05 { 0.05 } else { t }).collect();
        exact.push(th);
        starts.push(nudged);
    }

    let f = |th: &[f64]| pb.objective(th);
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |x: Vec<f64>, v: f64, best: &mut Option<(Vec<f64>, f64)>| {
        if v.is_finite() && best.as_ref().map_or(true, |b| v < b.1) {
            *best = Some((x, v));
        }
    };
    for th in exact {
        let v = f(&th);
        evaluations += 1;
        consider(th, v, &mut best);
    }
    let nm_opts = NelderMeadOptions { max_iter: 300 * dim, f_tol: 1e-9, x_tol: 1e-7, initial_step: 0.2 };
    for x0 in starts {
        let mut x = x0;
        if !f(&x).is_finite() {
            // Feasibility repair: shrink towards an exponential-like fit.
            let mut ok = false;
            for _ in 0..20 {
                for (t, tr) in x.iter_mut().zip(&pb.tr) {
                    match tr {
                        Transform::Raw => *t *= 0.5,
                        Transform::Log => *t += 0.3,
                        Transform::Square => *t *= 0.5,
                    }
                }
                if f(&x).is_finite() {
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue;
            }
        }
        if opts.simplex {
            let m = nelder_mead(f, &x, nm_opts);
            evaluations += m.evaluations;
            x = m.x;
        }
        let m = bfgs(f, &x, BfgsOptions::default());
        evaluations += m.evaluations;
        consider(m.x, m.value, &mut best);
    }
    let Some((mut x, mut value)) = best else {
        return Err(Error::numeric(format!("no feasible starting point for {} fit", spec.family)));
    };
    if opts.polish {
        let start = crate::numeric::optim::Minimum { x: x.clone(), value, evaluations: 0, converged: false };
        let m = newton_polish(f, start, 4);
        evaluations += m.evaluations;
        if m.value <= value + 8.0 * f64::EPSILON * value.abs().max(1.0) {
            x = m.x;
            value = m.value;
        }
    }

    let mle = pb.params(&x).ok_or_else(|| Error::internal("optimum outside the parameter space"))?;
    let loglik = -value;
    let vals = mle.values();
    let at_wall: Vec<bool> = (0..dim)
        .map(|i| {
            (pb.tr[i] == Transform::Square && vals[i] < 1e-10) || (pb.shapes.contains(&i) && vals[i] < SHAPE_FLOOR + 1e-6)
        })
        .collect();
    let boundary = at_wall.iter().any(|&b| b);

    let mut fm = f;
    let grad = fd_gradient(&mut fm, &x, value);
    evaluations += 2 * dim;
    let gradient_norm = grad
        .iter()
        .zip(&at_wall)
        .filter(|(_, w)| !**w)
        .fold(0.0f64, |m, (g, _)| if g.is_nan() { f64::INFINITY } else { m.max(g.abs()) });
    let converged = loglik.is_finite() && gradient_norm < 1e-4 * loglik.abs().max(1.0);

    let mut observed_information = None;
    let mut covariance = None;
    let mut std_errors = vec![None; dim];
    if opts.information {
        let h = fd_hessian(&mut fm, &x);
        evaluations += 1 + 2 * dim + 2 * dim * dim;
        let hm = DMatrix::from_fn(dim, dim, |i, j| h[i][j]);
        if hm.iter().all(|v| v.is_finite()) {
            if let Some(ch) = hm.clone().cholesky() {
                let cov_theta = ch.inverse();
                let jac: Vec<f64> = (0..dim).map(|i| pb.tr[i].derivative(x[i])).collect();
                let cov = DMatrix::from_fn(dim, dim, |i, j| jac[i] * cov_theta[(i, j)] * jac[j]);
                for i in 0..dim {
                    if !at_wall[i] && cov[(i, i)] > 0.0 {
                        std_errors[i] = Some(cov[(i, i)].sqrt());
                    }
                }
                if !boundary && jac.iter().all(|d| *d != 0.0) {
                    let info = DMatrix::from_fn(dim, dim, |i, j| hm[(i, j)] / (jac[i] * jac[j]));
                    observed_information = Some(rows(&info));
                }
                covariance = Some(rows(&cov));
            }
        }
    }

    Ok(FitResult {
        spec: spec.clone(),
        mle,
        loglik,
        observed_information,
        covariance,
        std_errors,
        converged,
        boundary,
        gradient_norm,
        evaluations,
        n_used: records.len(),
        ties_excluded: 0,
        threshold: spec.threshold,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Minimum number of exceedances for a fit.
pub const MIN_RECORDS: usize = 3;

/// Maximum likelihood fit of `spec` to the exceedances of `spec.threshold`.
pub fn fit_mle(spec: &ModelSpec, records: &[LifetimeRecord]) -> Result<FitResult> {
    fit_mle_with(spec, records, &FitOptions::default())
}

pub(crate) fn fit_mle_with(spec: &ModelSpec, records: &[LifetimeRecord], opts: &FitOptions) -> Result<FitResult> {
    for r in records {
        r.validate()?;
    }
    let ex = exceedances(records, spec.threshold)?;
    if ex.records.len() < MIN_RECORDS {
        return Err(Error::input(format!(
            "only {} usable records above threshold {}; at least {MIN_RECORDS} needed",
            ex.records.len(),
            spec.threshold
        )));
    }
    let mut fit = fit_exceedances(spec, &ex.records, opts)?;
    fit.ties_excluded = ex.ties;
    Ok(fit)
}
