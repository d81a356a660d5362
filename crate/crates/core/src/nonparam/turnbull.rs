use serde::{Deserialize, Serialize};

use super::{mass_covariance, NpEstimate, NpMethod};
use crate::error::{Error, Result};
use crate::record::{Event, LifetimeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop when no mass changes by more than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Compute mass variances from the observed information.
    pub variance: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { tol: 1e-9, max_iter: 100_000, variance: true }
    }
}

/// Log-likelihood after every EM iteration (the first entry is at the
/// uniform start).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub loglik: Vec<f64>,
}

type Range = (usize, usize);

fn intersect(a: Range, b: Range) -> Option<Range> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo < hi).then_some((lo, hi))
}

/// Atoms of record `r`'s event region, as a half-open index range.
/// Interval-censored events cover `[lower, upper)`, right-censored ones
/// `(time, inf]`.
fn event_range(support: &[f64], e: &Event) -> Range {
    let n = support.len();
    match *e {
        Event::Observed { time } => (support.partition_point(|&a| a < time), support.partition_point(|&a| a <= time)),
        Event::RightCensored { time } => (support.partition_point(|&a| a <= time), n),
        Event::IntervalCensored { lower, upper } => {
            (support.partition_point(|&a| a < lower), support.partition_point(|&a| a < upper))
        }
    }
}

fn truncation_ranges(support: &[f64], r: &LifetimeRecord) -> Vec<Range> {
    r.truncation
        .intervals()
        .iter()
        .map(|iv| (support.partition_point(|&a| a < iv.lower), support.partition_point(|&a| a <= iv.upper)))
        .filter(|(a, b)| a < b)
        .collect()
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Side {
    Left,
    Right,
}

/// Support atoms for Turnbull's estimator: one point inside each innermost
/// interval of the event regions (observed times are their own atoms), plus
/// a point for any record whose event region meets its truncation set only
/// outside those intervals. Mass beyond every finite point sits on an atom
/// at infinity.
pub fn turnbull_support(records: &[LifetimeRecord]) -> Result<Vec<f64>> {
    // Endpoints ordered by (value, position): 0 just before the value,
    // 1 at it, 2 just after it.
    let mut ends: Vec<(f64, u8, Side)> = Vec::with_capacity(2 * records.len());
    for r in records {
        r.validate()?;
        match r.event {
            Event::Observed { time } => {
                ends.push((time, 1, Side::Left));
                ends.push((time, 1, Side::Right));
            }
            Event::RightCensored { time } => {
                ends.push((time, 2, Side::Left));
                ends.push((f64::INFINITY, 1, Side::Right));
            }
            Event::IntervalCensored { lower, upper } => {
                ends.push((lower, 1, Side::Left));
                ends.push((upper, if upper.is_infinite() { 1 } else { 0 }, Side::Right));
            }
        }
    }
    ends.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.partial_cmp(&b.2).unwrap()));
    let mut atoms = Vec::new();
    for w in ends.windows(2) {
        let (l, r) = (w[0], w[1]);
        if l.2 == Side::Left && r.2 == Side::Right {
            let p = if l.1 == 1 {
                l.0
            } else if r.1 == 1 {
                r.0
            } else {
                0.5 * (l.0 + r.0)
            };
            atoms.push(p);
        }
    }
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    // Records whose region meets the truncation set away from every atom.
    let mut extra = Vec::new();
    for r in records {
        if usable_ranges(&atoms, r).is_some() {
            continue;
        }
        if let Some(p) = fallback_atom(r) {
            extra.push(p);
        }
    }
    atoms.extend(extra);
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    Ok(atoms)
}

fn fallback_atom(r: &LifetimeRecord) -> Option<f64> {
    for iv in r.truncation.intervals() {
        match r.event {
            Event::Observed { time } => return Some(time),
            Event::RightCensored { time } => {
                if iv.upper > time {
                    return Some(iv.upper);
                }
            }
            Event::IntervalCensored { lower, upper } => {
                let p = lower.max(iv.lower);
                if p < upper && p <= iv.upper {
                    return Some(p);
                }
            }
        }
    }
    None
}

fn usable_ranges(support: &[f64], r: &LifetimeRecord) -> Option<(Vec<Range>, Vec<Range>)> {
    let t = truncation_ranges(support, r);
    let e = event_range(support, &r.event);
    let c: Vec<Range> = t.iter().filter_map(|&ti| intersect(e, ti)).collect();
    (!c.is_empty()).then_some((c, t))
}

#[cfg(test)]
pub(crate) fn record_ranges(support: &[f64], r: &LifetimeRecord) -> (Vec<Range>, Vec<Range>) {
    usable_ranges(support, r).unwrap_or_else(|| (Vec::new(), truncation_ranges(support, r)))
}

fn range_sum(prefix: &[f64], ranges: &[Range]) -> f64 {
    ranges.iter().map(|&(a, b)| prefix[b] - prefix[a]).sum()
}

struct Sets {
    event: Vec<Vec<Range>>,
    trunc: Vec<Vec<Range>>,
}

impl Sets {
    fn loglik_and_probs(&self, prefix: &[f64]) -> (f64, Vec<(f64, f64)>) {
        let mut ll = 0.0;
        let mut probs = Vec::with_capacity(self.event.len());
        for (c, t) in self.event.iter().zip(&self.trunc) {
            let pc = range_sum(prefix, c);
            let pt = range_sum(prefix, t).max(1e-300);
            ll += pc.ln() - pt.ln();
            probs.push((pc, pt));
        }
        (ll, probs)
    }
}

fn prefix_sums(f: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(f.len() + 1);
    let mut s = 0.0;
    p.push(0.0);
    for &v in f {
        s += v;
        p.push(s);
    }
    p
}

/// Turnbull's self-consistency EM for interval-censored, interval-truncated
/// records on a discrete support. Each iteration allocates every record's
/// unit mass over its event atoms, plus the expected "ghost" mass it
/// represents outside its truncation set, then renormalizes.
///
/// With `support = None` the atoms come from [`turnbull_support`].
pub fn turnbull_em(records: &[LifetimeRecord], support: Option<&[f64]>, opts: &EmOptions) -> Result<NpEstimate> {
    turnbull_em_traced(records, support, opts).map(|(e, _)| e)
}

pub fn turnbull_em_traced(
    records: &[LifetimeRecord],
    support: Option<&[f64]>,
    opts: &EmOptions,
) -> Result<(NpEstimate, EmTrace)> {
    if records.is_empty() {
        return Err(Error::input("no records"));
    }
    let support = match support {
        Some(s) => {
            if s.is_empty() || s.windows(2).any(|w| !(w[1] > w[0])) || s.iter().any(|v| v.is_nan()) {
                return Err(Error::input("support must be nonempty and strictly increasing"));
            }
            for r in records {
                r.validate()?;
            }
            s.to_vec()
        }
        None => turnbull_support(records)?,
    };
    let j = support.len();
    let mut sets = Sets { event: Vec::with_capacity(records.len()), trunc: Vec::with_capacity(records.len()) };
    for (i, r) in records.iter().enumerate() {
        let (c, t) = usable_ranges(&support, r).ok_or_else(|| {
            let who = if r.id.is_empty() { format!("#{i}") } else { format!("'{}'", r.id) };
            Error::input(format!("record {who}: event region has no support atom inside its truncation set"))
        })?;
        sets.event.push(c);
        sets.trunc.push(t);
    }

    let n = records.len() as f64;
    let mut f = vec![1.0 / j as f64; j];
    let mut trace = EmTrace::default();
    let mut prefix = prefix_sums(&f);
    let (mut ll, mut probs) = sets.loglik_and_probs(&prefix);
    trace.loglik.push(ll);
    let mut iterations = 0;
    let mut converged = false;
    let mut acc = vec![0.0; j + 1];
    while iterations < opts.max_iter {
        iterations += 1;
        // E-step as a difference array over atom indices.
        acc.iter_mut().for_each(|v| *v = 0.0);
        let mut ghost_all = 0.0;
        for ((c, t), &(pc, pt)) in sets.event.iter().zip(&sets.trunc).zip(&probs) {
            for &(a, b) in c {
                acc[a] += 1.0 / pc;
                acc[b] -= 1.0 / pc;
            }
            ghost_all += 1.0 / pt;
            for &(a, b) in t {
                acc[a] -= 1.0 / pt;
                acc[b] += 1.0 / pt;
            }
        }
        let mut run = ghost_all;
        let mut next = vec![0.0; j];
        for k in 0..j {
            run += acc[k];
            next[k] = f[k] * run.max(0.0);
        }
        let total: f64 = next.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::numeric("EM step produced no mass"));
        }
        let mut delta = 0.0f64;
        for k in 0..j {
            next[k] /= total;
            delta = delta.max((next[k] - f[k]).abs());
        }
        f = next;
        prefix = prefix_sums(&f);
        let (ll_new, p_new) = sets.loglik_and_probs(&prefix);
        if ll_new < ll - 1e-9 * ll.abs().max(n) {
            return Err(Error::internal(format!(
                "EM log-likelihood decreased from {ll} to {ll_new} at iteration {iterations}"
            )));
        }
        ll = ll_new;
        probs = p_new;
        trace.loglik.push(ll);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let mut est = NpEstimate::from_masses(NpMethod::Turnbull, support, f);
    est.loglik = ll;
    est.iterations = iterations;
    est.converged = converged;
    if !converged {
        est.notes.push(format!("EM stopped after {iterations} iterations without converging"));
    }
    if opts.variance {
        fill_variances(&mut est, &sets);
    }
    Ok((est, trace))
}

/// Interior atoms above this mass get variances; the others sit on the
/// boundary of the simplex where the information is singular.
const INTERIOR_MASS: f64 = 1e-6;
const MAX_VARIANCE_ATOMS: usize = 400;

fn fill_variances(est: &mut NpEstimate, sets: &Sets) {
    let interior: Vec<usize> = (0..est.mass.len()).filter(|&k| est.mass[k] > INTERIOR_MASS).collect();
    if interior.len() > MAX_VARIANCE_ATOMS {
        est.notes.push(format!("variances skipped: {} atoms with positive mass", interior.len()));
        return;
    }
    if interior.len() < est.mass.len() {
        est.notes.push(format!(
            "{} atom(s) with zero mass have no variance",
            est.mass.len() - interior.len()
        ));
    }
    let pos: std::collections::HashMap<usize, usize> = interior.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let dense = |ranges: &[Range]| {
        let mut v = vec![0.0; interior.len()];
        for &(a, b) in ranges {
            for k in a..b {
                if let Some(&i) = pos.get(&k) {
                    v[i] = 1.0;
                }
            }
        }
        v
    };
    let rows: Vec<(Vec<f64>, Vec<f64>)> =
        sets.event.iter().zip(&sets.trunc).map(|(c, t)| (dense(c), dense(t))).collect();
    let masses: Vec<f64> = interior.iter().map(|&k| est.mass[k]).collect();
    match mass_covariance(&rows, &masses) {
        Some(cov) => {
            for (i, &k) in interior.iter().enumerate() {
                let v = cov[(i, i)];
                est.variance[k] = (v.is_finite() && v >= 0.0).then_some(v);
            }
        }
        None if interior.len() >= 2 => est.notes.push("observed information is singular; no variances".into()),
        None => {
            if let Some(&k) = interior.first() {
                est.variance[k] = Some(0.0);
            }
        }
    }
}
