//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset. Set
//! `LONGTAIL_ACCEPTANCE_STRICT=1` to exit nonzero when a criterion fails.
//! Criterion 12 needs real data; see `scripts/reproduce_idl.sh`.

use std::process::ExitCode;
use std::time::Instant;

use longtail::diagnostics::{nonparametric_for, qq_bootstrap_band, qq_positions_truncated, QqStrategy};
use longtail::likelihood::{bootstrap_lrt, fit_exceedances, fit_mle, FitOptions};
use longtail::models::gp_endpoint;
use longtail::nonparam::{turnbull_em_traced, turnbull_support, EmOptions};
use longtail::simlab::{bundled_config, ExperimentConfig};
use longtail::{bayes, Event, Family, LifetimeRecord, ModelSpec, Params, TruncationSet};
use rand::Rng;

type Outcome = Result<(bool, String), String>;

fn check(ok: bool, detail: String) -> Outcome {
    Ok((ok, detail))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn endpoint() -> Outcome {
    let psi = gp_endpoint(110.0, 1.546, -0.108);
    check((psi - 124.31).abs() <= 0.05, format!("psi = {psi:.4}"))
}

fn survival() -> Outcome {
    let s = Params::Exponential { sigma: 1.38 }.survivor(1.0);
    check((s - 0.4845).abs() <= 0.0005, format!("S(1) = {s:.5}"))
}

fn extinct_cohorts() -> Outcome {
    let cfg = bundled_config("appendix_b").map_err(err)?;
    let ExperimentConfig::ExtinctCohort(cfg) = cfg else { return Err("unexpected bundled config".into()) };
    let r = longtail::simlab::extinct_cohort_experiment(&cfg).map_err(err)?;
    let e = |name: &str| r.estimator(name).ok_or_else(|| format!("missing {name}"));
    let (naive, trunc, all) = (e("extinct_naive")?, e("extinct_truncated")?, e("all_truncated")?);
    let biased = naive.bias < -3.0 * naive.se_mean;
    let unbiased = trunc.bias.abs() <= 3.0 * trunc.se_mean && all.bias.abs() <= 3.0 * all.se_mean;
    let smaller = all.variance < trunc.variance && all.variance < naive.variance;
    check(
        biased && unbiased && smaller,
        format!(
            "bias/se naive {:.2}, extinct {:.2}, all {:.2}; var all {:.5} < extinct {:.5}, naive {:.5}; kept {} of {}",
            naive.bias / naive.se_mean,
            trunc.bias / trunc.se_mean,
            all.bias / all.se_mean,
            all.variance,
            trunc.variance,
            naive.variance,
            r.estimates.len(),
            r.replicates
        ),
    )
}

fn tabulation() -> Outcome {
    let cfg = bundled_config("japan_tabulation").map_err(err)?;
    let ExperimentConfig::Tabulation(cfg) = cfg else { return Err("unexpected bundled config".into()) };
    let r = longtail::simlab::tabulation_experiment(&cfg).map_err(err)?;
    let ok = r.exact.fraction_above_cap < 0.05
        && r.binned.fraction_above_cap < 0.05
        && r.ks_distance < 0.05
        && r.exact.median < r.true_endpoint
        && r.binned.median < r.true_endpoint;
    check(
        ok,
        format!(
            "above {}: exact {:.3}, binned {:.3}; KS {:.4}; medians {:.2}, {:.2} vs {:.2}; failed {}",
            cfg.cap,
            r.exact.fraction_above_cap,
            r.binned.fraction_above_cap,
            r.ks_distance,
            r.exact.median,
            r.binned.median,
            r.true_endpoint,
            r.failed_replicates
        ),
    )
}

/// Small random dataset on an integer grid mixing exact, right-censored and
/// interval-censored deaths under left or interval truncation.
fn small_instance<R: Rng>(g: &mut R) -> Vec<LifetimeRecord> {
    let n = g.gen_range(4..10);
    (0..n)
        .map(|_| {
            let a = g.gen_range(0..3) as f64;
            let t = a + g.gen_range(1..4) as f64;
            let truncation = if g.gen_bool(0.5) {
                TruncationSet::single(a, f64::INFINITY)
            } else {
                TruncationSet::single(a, t + g.gen_range(0..3) as f64)
            };
            let event = match g.gen_range(0..3) {
                0 => Event::Observed { time: t },
                1 if truncation.is_unbounded_above() => Event::RightCensored { time: t },
                _ => Event::IntervalCensored { lower: t - 1.0, upper: t + 1.0 },
            };
            LifetimeRecord::new(event, truncation)
        })
        .collect()
}

/// Membership of atom `s` in the event region of `e`, written out
/// independently of the library.
fn in_event(e: &Event, s: f64) -> bool {
    match *e {
        Event::Observed { time } => s == time,
        Event::RightCensored { time } => s > time,
        Event::IntervalCensored { lower, upper } => s >= lower && s < upper,
    }
}

fn in_truncation(t: &TruncationSet, s: f64) -> bool {
    if s.is_infinite() {
        t.is_unbounded_above()
    } else {
        t.intervals().iter().any(|iv| s >= iv.lower && s <= iv.upper)
    }
}

/// Log-likelihood of atom masses `p` on `support`.
fn np_loglik(records: &[LifetimeRecord], support: &[f64], p: &[f64]) -> f64 {
    records
        .iter()
        .map(|r| {
            let (mut num, mut den) = (0.0, 0.0);
            for (&s, &m) in support.iter().zip(p) {
                if in_truncation(&r.truncation, s) {
                    den += m;
                    if in_event(&r.event, s) {
                        num += m;
                    }
                }
            }
            if num <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (num / den).ln()
            }
        })
        .sum()
}

/// Every composition of `total` into `j` nonnegative parts.
fn compositions(j: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == j {
        prefix.push(total - prefix.iter().sum::<usize>());
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    let used: usize = prefix.iter().sum();
    for k in 0..=total - used {
        prefix.push(k);
        compositions(j, total, prefix, out);
        prefix.pop();
    }
}

/// Climbs the nonparametric likelihood from `p` by pairwise mass
/// transfers of shrinking size.
fn refine(records: &[LifetimeRecord], support: &[f64], mut p: Vec<f64>, mut delta: f64) -> (Vec<f64>, f64) {
    let j = support.len();
    let mut best_ll = np_loglik(records, support, &p);
    while delta > 1e-12 {
        let mut improved = true;
        while improved {
            improved = false;
            for from in 0..j {
                for to in 0..j {
                    if from == to || p[from] <= 0.0 {
                        continue;
                    }
                    let mut q = p.clone();
                    let d = delta.min(q[from]);
                    q[from] -= d;
                    q[to] += d;
                    let ll = np_loglik(records, support, &q);
                    if ll > best_ll {
                        p = q;
                        best_ll = ll;
                        improved = true;
                    }
                }
            }
        }
        delta *= 0.5;
    }
    (p, best_ll)
}

/// Maximizes the nonparametric likelihood over the simplex: a grid at
/// spacing 1/200 refined by [`refine`], plus climbs from spread-out starts.
/// Returns the best masses and loglik, and whether every start reaching
/// that loglik found the same masses.
fn brute_force(records: &[LifetimeRecord], support: &[f64]) -> (Vec<f64>, f64, bool) {
    let j = support.len();
    let steps = 200;
    let mut grid = Vec::new();
    compositions(j, steps, &mut Vec::new(), &mut grid);
    let mut best = vec![1.0 / j as f64; j];
    let mut best_ll = np_loglik(records, support, &best);
    for c in grid {
        let p: Vec<f64> = c.iter().map(|&k| k as f64 / steps as f64).collect();
        let ll = np_loglik(records, support, &p);
        if ll > best_ll {
            best = p;
            best_ll = ll;
        }
    }
    let mut found = vec![refine(records, support, best, 1.0 / steps as f64)];
    for k in 0..j {
        let mut start = vec![0.3 / j as f64; j];
        start[k] += 0.7;
        found.push(refine(records, support, start, 0.1));
    }
    found.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (top, top_ll) = found[0].clone();
    let unique = found
        .iter()
        .filter(|(_, ll)| *ll >= top_ll - 1e-9 * top_ll.abs().max(1.0))
        .all(|(p, _)| p.iter().zip(&top).all(|(a, b)| (a - b).abs() <= 1e-5));
    (top, top_ll, unique)
}

fn turnbull_oracle() -> Outcome {
    let mut g = longtail::rng::stream(2024, 5);
    let opts = EmOptions { tol: 1e-13, max_iter: 5_000_000, variance: false };
    let (mut worst, mut done, mut flat, mut monotone) = (0.0f64, 0, 0, true);
    let mut failures = Vec::new();
    while done < 20 {
        let records = small_instance(&mut g);
        let Ok(support) = turnbull_support(&records) else { continue };
        if support.len() > 4 || support.len() < 2 {
            continue;
        }
        let (est, trace) = turnbull_em_traced(&records, Some(&support), &opts).map_err(err)?;
        if !est.loglik.is_finite() {
            continue;
        }
        monotone &= trace.loglik.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        let (p, ll, unique) = brute_force(&records, &support);
        if !unique {
            // The maximum is a ridge: masses are not identified, only the
            // maximized loglik is.
            flat += 1;
            if (est.loglik - ll).abs() > 1e-7 * ll.abs().max(1.0) {
                failures.push(format!("flat instance: loglik em {:.8} grid {ll:.8}", est.loglik));
            }
            continue;
        }
        let gap = est.mass.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-4 {
            failures.push(format!("instance {done}: gap {gap:.2e}, loglik em {:.8} grid {ll:.8}", est.loglik));
        }
        worst = worst.max(gap);
        done += 1;
    }
    check(
        failures.is_empty() && monotone,
        format!(
            "20 identified instances, largest mass gap {worst:.2e}, loglik monotone {monotone}; {flat} unidentified instances matched on loglik only{}",
            failures.iter().map(|f| format!("; {f}")).collect::<String>()
        ),
    )
}

fn ltrc_closed_form() -> Outcome {
    let mut g = longtail::rng::stream(606, 0);
    let law = Params::Exponential { sigma: 1.5 };
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let n = g.gen_range(10..80);
        let records: Vec<LifetimeRecord> = (0..n)
            .map(|_| {
                let a = g.gen_range(0.0..3.0);
                let t = law.sample_in_set(&TruncationSet::single(a, f64::INFINITY), &mut g).unwrap();
                LifetimeRecord::left_truncated(t, a, a + g.gen_range(0.2..4.0))
            })
            .collect();
        let (mut exposure, mut deaths) = (0.0, 0.0);
        for r in &records {
            let a = r.truncation.lower();
            match r.event {
                Event::Observed { time } => {
                    exposure += time - a;
                    deaths += 1.0;
                }
                Event::RightCensored { time } => exposure += time - a,
                Event::IntervalCensored { .. } => unreachable!(),
            }
        }
        if deaths == 0.0 {
            continue;
        }
        let fit = fit_mle(&ModelSpec::new(Family::Exponential, 0.0), &records).map_err(err)?;
        let closed = exposure / deaths;
        worst = worst.max((fit.estimate("sigma").unwrap() - closed).abs() / closed);
        done += 1;
    }
    check(worst <= 1e-8, format!("largest relative error {worst:.2e} over 100 instances"))
}

/// Exponential lifetimes observed only inside `[0, b]`, `b` uniform.
fn truncated_exponential<R: Rng>(sigma: f64, n: usize, g: &mut R) -> Vec<LifetimeRecord> {
    let law = Params::Exponential { sigma };
    (0..n)
        .map(|i| {
            let b = g.gen_range(2.0..8.0);
            let t = law.sample_in_set(&TruncationSet::single(0.0, b), g).unwrap();
            LifetimeRecord::interval_truncated(t, 0.0, b).with_id(format!("{i}"))
        })
        .collect()
}

fn boundary_lrt() -> Outcome {
    let (outer, b) = (500, 199);
    let s0 = ModelSpec::new(Family::Exponential, 0.0);
    let s1 = ModelSpec::new(Family::Gompertz, 0.0);
    let (mut rejected, mut larger, mut used) = (0, 0, 0);
    for k in 0..outer {
        let mut g = longtail::rng::stream(7007, k);
        let data = truncated_exponential(1.4, 200, &mut g);
        let Ok(t) = bootstrap_lrt(&s0, &s1, &data, b, longtail::rng::child_seed(7008, k)) else { continue };
        let pb = t.p_bootstrap.unwrap();
        used += 1;
        rejected += (pb <= 0.05) as usize;
        larger += (pb >= t.p_asymptotic) as usize;
    }
    let rate = rejected as f64 / used as f64;
    let frac = larger as f64 / used as f64;
    check(
        (0.03..=0.07).contains(&rate) && frac >= 0.8 && used * 50 >= outer * 49,
        format!("rejection rate {rate:.3}; p_boot >= p_half_chi2 in {frac:.3}; {used} of {outer} replicates"),
    )
}

fn threshold_stability() -> Outcome {
    let law = Params::GenPareto { sigma: 1.5, xi: -0.1 };
    let records: Vec<LifetimeRecord> =
        law.sample_seeded(100_000, 88, None).map_err(err)?.into_iter().map(LifetimeRecord::untruncated).collect();
    let fit = fit_mle(&ModelSpec::new(Family::GenPareto, 1.0), &records).map_err(err)?;
    let (s, xi) = (fit.estimate("sigma").unwrap(), fit.estimate("xi").unwrap());
    let (ss, sx) = (fit.std_error("sigma").ok_or("no SE")?, fit.std_error("xi").ok_or("no SE")?);
    let zs = (s - 1.4) / ss;
    let zx = (xi + 0.1) / sx;
    check(
        zs.abs() <= 3.0 && zx.abs() <= 3.0,
        format!("sigma {s:.4} ({ss:.4}) z {zs:.2}; xi {xi:.4} ({sx:.4}) z {zx:.2}; {} exceedances", fit.n_used),
    )
}

fn penultimate() -> Outcome {
    let mut worst = 0.0f64;
    for &lambda in &[0.0, 0.01, 0.1, 1.0] {
        for &beta in &[0.05, 0.2, 1.0, 3.0] {
            for &sigma in &[0.5, 1.0, 2.0, 5.0] {
                // Reciprocal hazard of lambda + exp(beta t / sigma) / sigma.
                let r = |t: f64| 1.0 / (lambda + (beta * t / sigma).exp() / sigma);
                let p = Params::GompertzMakeham { sigma, beta, lambda: lambda.max(1e-300) };
                for &u in &[0.0f64, 0.3, 1.0, 2.5, 5.0, 10.0, 20.0] {
                    let h = 1e-4 * u.max(1.0);
                    let fd = (r(u + h) - r(u - h)) / (2.0 * h);
                    let closed = p.penultimate_shape(u).map_err(err)?;
                    worst = worst.max((closed - fd).abs());
                }
            }
        }
    }
    let mut monotone = true;
    let mut small = true;
    for &(lambda, beta, sigma) in &[(0.01, 0.1, 1.0), (0.5, 1.0, 2.0), (2.0, 0.3, 4.0), (5.0, 2.0, 1.0)] {
        let p = Params::GompertzMakeham { sigma, beta, lambda };
        // |xi_u| rises while lambda sigma exp(-beta u / sigma) > 1, then
        // decreases to zero.
        let turn = (sigma / beta * (lambda * sigma).ln()).max(0.0);
        let mut prev = f64::INFINITY;
        for k in 0..=400 {
            let u = turn + k as f64 * 60.0 * sigma / beta / 400.0;
            let x = p.penultimate_shape(u).map_err(err)?;
            monotone &= x <= 0.0 && x.abs() <= prev;
            prev = x.abs();
            if u > 15.0 * sigma / beta {
                small &= x.abs() < 1e-3;
            }
        }
    }
    check(
        worst <= 1e-6 && monotone && small,
        format!("largest closed-form error {worst:.2e}; monotone {monotone}; below 1e-3 past 15 sigma/beta {small}"),
    )
}

fn rou_gamma() -> Outcome {
    let n = 50;
    let times = Params::Exponential { sigma: 1.5 }.sample_seeded(n, 10, None).map_err(err)?;
    let total: f64 = times.iter().sum();
    let records: Vec<LifetimeRecord> = times.into_iter().map(LifetimeRecord::untruncated).collect();
    let post = bayes::posterior_sample(&ModelSpec::new(Family::Exponential, 0.0), &records, 100_000, 31).map_err(err)?;
    let rates: Vec<f64> = post.draws.iter().map(|d| 1.0 / d[0]).collect();
    let m = longtail::numeric::stats::mean(&rates);
    let v = longtail::numeric::stats::variance(&rates);
    let (m0, v0) = (n as f64 / total, n as f64 / (total * total));
    let (em, ev) = (m / m0 - 1.0, v / v0 - 1.0);
    check(
        em.abs() <= 0.01 && ev.abs() <= 0.01,
        format!("mean {m:.5} vs {m0:.5} ({:+.3}%), variance {v:.6} vs {v0:.6} ({:+.3}%)", 100.0 * em, 100.0 * ev),
    )
}

fn qq() -> Outcome {
    let law = Params::Exponential { sigma: 1.2 };
    let times = law.sample_seeded(60, 12, None).map_err(err)?;
    let records: Vec<LifetimeRecord> =
        times.iter().enumerate().map(|(i, &t)| LifetimeRecord::untruncated(t).with_id(format!("{i}"))).collect();
    let f0 = Params::Exponential { sigma: 1.3 };
    let fnp = nonparametric_for(&records).map_err(err)?;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for strategy in [QqStrategy::A, QqStrategy::B] {
        let q = qq_positions_truncated(&records, &f0, &fnp, strategy).map_err(err)?;
        if q.points.len() != sorted.len() {
            return check(false, format!("{strategy:?}: {} points", q.points.len()));
        }
        for pt in &q.points {
            let rank = sorted.partition_point(|&y| y < pt.observed) + 1;
            let classical = -1.3 * (1.0 - rank as f64 / (n + 1.0)).ln();
            worst = worst.max((pt.position - classical).abs()).max((pt.value - pt.observed).abs());
        }
    }

    let (datasets, b) = (20, 199);
    let spec = ModelSpec::new(Family::Exponential, 0.0);
    let mut cover = Vec::new();
    for k in 0..datasets {
        let mut g = longtail::rng::stream(1111, k);
        let data = truncated_exponential(1.4, 150, &mut g);
        let fit = fit_exceedances(&spec, &data, &FitOptions::default()).map_err(err)?;
        let fnp = nonparametric_for(&data).map_err(err)?;
        let pts = qq_positions_truncated(&data, &fit.mle, &fnp, QqStrategy::B).map_err(err)?;
        let band = qq_bootstrap_band(&fit, &data, b, 0.9, longtail::rng::child_seed(1112, k), QqStrategy::B).map_err(err)?;
        cover.push(band.coverage(&pts.points));
    }
    let c = longtail::numeric::stats::mean(&cover);
    check(
        worst <= 1e-10 && (0.78..=0.95).contains(&c),
        format!("classical positions off by {worst:.1e}; mean 90% band coverage {c:.3} over {datasets} datasets"),
    )
}

fn idl_reproduction() -> Option<Outcome> {
    let path = std::env::var("LONGTAIL_IDL_RECORDS").ok()?;
    Some((|| {
        let records = longtail::ingest::load_records(&path).map_err(err)?;
        let fit = fit_mle(&ModelSpec::new(Family::Exponential, 110.0), &records).map_err(err)?;
        let s = fit.estimate("sigma").unwrap();
        let se = fit.std_error("sigma").ok_or("no SE")?;
        let (lo, hi) = (s - 1.96 * se, s + 1.96 * se);
        check(
            (s - 1.38).abs() <= 0.01 && (lo - 1.29).abs() <= 0.01 && (hi - 1.48).abs() <= 0.01,
            format!("sigma {s:.3}, 95% interval ({lo:.3}, {hi:.3})"),
        )
    })())
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "endpoint arithmetic", endpoint),
        (2, "exponential survival", survival),
        (3, "extinct cohort bias", extinct_cohorts),
        (4, "tabulation experiment", tabulation),
        (5, "Turnbull EM against brute force", turnbull_oracle),
        (6, "closed-form exponential estimate", ltrc_closed_form),
        (7, "boundary likelihood ratio calibration", boundary_lrt),
        (8, "threshold stability", threshold_stability),
        (9, "penultimate shape", penultimate),
        (10, "ratio-of-uniforms moments", rou_gamma),
        (11, "Q-Q positions and band coverage", qq),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let mut failed = 0;
    for (k, name, f) in criteria {
        if !selected(k) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        println!("criterion {k}: {} {name}: {detail} ({:.1}s)", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if selected(12) {
        match idl_reproduction() {
            None => println!("criterion 12: SKIP IDL reproduction: set LONGTAIL_IDL_RECORDS to a record file"),
            Some(r) => {
                let (ok, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
                failed += !ok as usize;
                println!("criterion 12: {} IDL reproduction: {detail}", if ok { "PASS" } else { "FAIL" });
            }
        }
    }
    if failed > 0 && std::env::var_os("LONGTAIL_ACCEPTANCE_STRICT").is_some() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
