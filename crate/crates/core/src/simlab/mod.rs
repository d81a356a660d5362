//! Simulation experiments on the Lexis plane: cohort generation under a
//! calendar window, the extinct-cohort study, the tabulation study and the
//! truncation tilt of observed lifetimes.
//!
//! Calendar times and lifetimes here are both in years; calendar time 0 is
//! the start of the simulated entry period.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Params;
use crate::numeric::quad::integrate;
use crate::record::LifetimeRecord;

mod configs;
mod extinct;
mod tabulation;

pub use configs::{bundled_config, ExperimentConfig, BUNDLED};
pub use extinct::{extinct_cohort_experiment, EstimatorSummary, ExtinctCohortConfig, ExtinctCohortResult};
pub use tabulation::{tabulation_experiment, TabulationConfig, TabulationResult};

/// Piecewise-linear entry rate `nu(x) >= 0` through `(x_k, nu_k)`, zero
/// outside `[x_0, x_last]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub knots: Vec<(f64, f64)>,
}

impl RateFunction {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let r = RateFunction { knots };
        r.validate()?;
        Ok(r)
    }

    pub fn constant(rate: f64, from: f64, to: f64) -> Result<Self> {
        Self::new(vec![(from, rate), (to, rate)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.len() < 2 {
            return Err(Error::input("a rate function needs at least two knots"));
        }
        if self.knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::input("rate function knots must be strictly increasing"));
        }
        if self.knots.iter().any(|k| !(k.1 >= 0.0) || !k.0.is_finite() || !k.1.is_finite()) {
            return Err(Error::input("rates must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x < k[0].0 || x > k[k.len() - 1].0 {
            return 0.0;
        }
        let i = k.partition_point(|p| p.0 <= x).clamp(1, k.len() - 1);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let mut s = 0.0;
        for w in self.knots.windows(2) {
            let lo = w[0].0.max(a);
            let hi = w[1].0.min(b);
            if hi > lo {
                s += 0.5 * (self.value(lo) + self.value(hi)) * (hi - lo);
            }
        }
        s
    }

    fn max_on(&self, a: f64, b: f64) -> f64 {
        let mut m = self.value(a).max(self.value(b));
        for k in &self.knots {
            if k.0 >= a && k.0 <= b {
                m = m.max(k.1);
            }
        }
        m
    }

    /// A point of `[a, b)` with density proportional to the rate.
    fn sample_in<R: Rng + ?Sized>(&self, a: f64, b: f64, rng: &mut R) -> f64 {
        let m = self.max_on(a, b);
        loop {
            let x = a + (b - a) * rng.gen::<f64>();
            if rng.gen::<f64>() * m <= self.value(x) {
                return x;
            }
        }
    }
}

/// How individuals reach the threshold age over calendar time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryProcess {
    /// Poisson counts with the configured annual mean, uniform within year.
    Uniform,
    /// Poisson process with the given rate.
    Rate { rate: RateFunction },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSimConfig {
    /// Number of entry years.
    pub years: usize,
    pub annual_mean: f64,
    pub law: Params,
    #[serde(default = "uniform_entry")]
    pub entry: EntryProcess,
    /// Observation window in calendar years; defaults to `[0, years]`.
    #[serde(default)]
    pub c1: Option<f64>,
    /// `None` means `years`; use a very large value to disable truncation.
    #[serde(default)]
    pub c2: Option<f64>,
}

fn uniform_entry() -> EntryProcess {
    EntryProcess::Uniform
}

impl CohortSimConfig {
    pub fn window(&self) -> (f64, f64) {
        (self.c1.unwrap_or(0.0), self.c2.unwrap_or(self.years as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if self.years == 0 {
            return Err(Error::input("at least one entry year is needed"));
        }
        if !(self.annual_mean > 0.0) || !self.annual_mean.is_finite() {
            return Err(Error::input("annual mean must be positive"));
        }
        self.law.validate()?;
        let (c1, c2) = self.window();
        if !(c2 >= c1) {
            return Err(Error::input("window must satisfy c1 <= c2"));
        }
        if let EntryProcess::Rate { rate } = &self.entry {
            rate.validate()?;
        }
        Ok(())
    }
}

/// One simulated individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Calendar time at which the threshold age is reached.
    pub entry: f64,
    pub lifetime: f64,
}

impl Individual {
    pub fn cohort(&self) -> usize {
        self.entry.floor().max(0.0) as usize
    }
}

/// A simulated population with its observable views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSample {
    pub truth: Vec<Individual>,
    /// Deaths inside the window, truncated to `[max(0, c1 - x), c2 - x]`.
    pub interval_truncated: Vec<LifetimeRecord>,
    /// Everyone alive inside the window, left-truncated at
    /// `max(0, c1 - x)` and censored at `c2 - x`.
    pub left_truncated: Vec<LifetimeRecord>,
    /// Members of the extinct cohorts, right-truncated at `c2 - x`.
    pub extinct: Vec<LifetimeRecord>,
    /// Last extinct cohort; `None` when the first cohort is not extinct.
    pub last_extinct_cohort: Option<usize>,
}

pub fn simulate_population<R: Rng + ?Sized>(config: &CohortSimConfig, rng: &mut R) -> Result<Vec<Individual>> {
    config.validate()?;
    let mut out = Vec::new();
    for year in 0..config.years {
        let (a, b) = (year as f64, year as f64 + 1.0);
        let mean = match &config.entry {
            EntryProcess::Uniform => config.annual_mean,
            EntryProcess::Rate { rate } => rate.integral(a, b),
        };
        let count = if mean > 0.0 {
            Poisson::new(mean).map_err(|e| Error::input(e.to_string()))?.sample(rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let entry = match &config.entry {
                EntryProcess::Uniform => a + rng.gen::<f64>(),
                EntryProcess::Rate { rate } => rate.sample_in(a, b, rng),
            };
            let lifetime = config.law.sample(1, rng, None)?[0];
            out.push(Individual { entry, lifetime });
        }
    }
    Ok(out)
}

/// Splits a population into its observable views under `config`'s window.
pub fn observe(config: &CohortSimConfig, truth: Vec<Individual>) -> CohortSample {
    let (c1, c2) = config.window();
    let mut interval_truncated = Vec::new();
    let mut left_truncated = Vec::new();
    let mut first_alive: Option<usize> = None;
    for (i, ind) in truth.iter().enumerate() {
        let (x, t) = (ind.entry, ind.lifetime);
        let id = format!("{i}");
        if x + t > c2 {
            let c = ind.cohort();
            first_alive = Some(first_alive.map_or(c, |f| f.min(c)));
        }
        if x >= c2 {
            continue;
        }
        let a = (c1 - x).max(0.0);
        let b = c2 - x;
        if t >= a && t <= b && c2 > c1 {
            interval_truncated.push(LifetimeRecord::interval_truncated(t, a, b).with_id(id.clone()));
        }
        if t >= a && c2 > c1 {
            left_truncated.push(LifetimeRecord::left_truncated(t, a, b).with_id(id));
        }
    }
    let last_extinct_cohort = match first_alive {
        None => Some(config.years.saturating_sub(1)),
        Some(0) => None,
        Some(k) => Some(k - 1),
    };
    let extinct = match last_extinct_cohort {
        None => Vec::new(),
        Some(k) => truth
            .iter()
            .enumerate()
            .filter(|(_, ind)| ind.cohort() <= k)
            .map(|(i, ind)| {
                let b = c2 - ind.entry;
                LifetimeRecord::interval_truncated(ind.lifetime, 0.0, b).with_id(format!("{i}"))
            })
            .collect(),
    };
    CohortSample { truth, interval_truncated, left_truncated, extinct, last_extinct_cohort }
}

/// Simulates one population and its observable views.
pub fn simulate_cohorts<R: Rng + ?Sized>(config: &CohortSimConfig, rng: &mut R) -> Result<CohortSample> {
    let truth = simulate_population(config, rng)?;
    Ok(observe(config, truth))
}

/// Density of lifetimes observed through the window `[c1, c2]` when
/// threshold crossings arrive at rate `nu`: proportional to `f(t) w(t)`
/// with `w(t) = int_{c1 - t}^{c2 - t} nu(x) dx`, normalized over the span
/// of `t_grid`.
pub fn tilted_density(law: &Params, nu: &RateFunction, c1: f64, c2: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    nu.validate()?;
    if t_grid.is_empty() {
        return Ok(Vec::new());
    }
    let w = |t: f64| nu.integral(c1 - t, c2 - t);
    let lo = t_grid.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let hi = t_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g = |t: f64| law.density(t).unwrap_or(0.0) * w(t);
    // Split at the kinks of w for accurate quadrature.
    let mut cuts = vec![lo, hi];
    for k in &nu.knots {
        for c in [c1 - k.0, c2 - k.0] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let z: f64 = cuts.windows(2).map(|p| integrate(g, p[0], p[1], 1e-13, 1e-10).0).sum();
    if !(z > 0.0) {
        return Err(Error::input("the window has zero weight over the grid"));
    }
    Ok(t_grid.iter().map(|&t| if t < 0.0 { 0.0 } else { g(t) / z }).collect())
}
