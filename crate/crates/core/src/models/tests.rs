use super::*;
use crate::numeric::quad::integrate;
use crate::numeric::stats::{ks_one_sample, mean};

fn examples() -> Vec<Params> {
    vec![
        Params::Exponential { sigma: 1.38 },
        Params::Gompertz { sigma: 2.0, beta: 0.3 },
        Params::GompertzMakeham { sigma: 3.0, beta: 0.5, lambda: 0.2 },
        Params::LogisticBeard { lambda: 0.05, a: 0.4, b: 0.6, gamma: 0.25 },
        Params::GenPareto { sigma: 1.546, xi: -0.108 },
        Params::GenPareto { sigma: 1.2, xi: 0.2 },
        Params::ExtGp { sigma: 1.5, beta: 0.4, xi: -0.2 },
        Params::ExtGp { sigma: 1.5, beta: 0.4, xi: 0.1 },
        Params::WeibullGp { sigma: 1.5, beta: 1.3, xi: -0.15 },
        Params::WeibullGp { sigma: 1.0, beta: 0.8, xi: 0.3 },
        Params::PiecewiseGp { knots: vec![0.0, 1.0, 2.5], sigma: 1.4, xi: vec![-0.2, 0.1, -0.3] },
        Params::Gev { eta: 2.0, tau: 1.0, xi: -0.2 },
        Params::Gev { eta: 2.0, tau: 1.0, xi: 0.0 },
    ]
}

fn grid(p: &Params) -> Vec<f64> {
    let (lo, hi) = p.support();
    let lo = if lo.is_finite() { lo } else { -5.0 };
    let hi = if hi.is_finite() { hi } else { lo + 25.0 };
    (1..40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect()
}

#[test]
fn density_is_hazard_times_survivor() {
    for p in examples() {
        for t in grid(&p) {
            let f = p.density(t).unwrap();
            let hs = p.hazard(t).unwrap() * p.survivor(t);
            assert!((f - hs).abs() <= 1e-12 * f.abs().max(1e-300), "{p:?} at {t}: {f} vs {hs}");
        }
    }
}

#[test]
fn densities_integrate_to_one() {
    for p in examples() {
        let (lo, hi) = p.support();
        let lo = if lo.is_finite() { lo } else { -40.0 };
        let hi = if hi.is_finite() { hi } else { 400.0 };
        let f = |t: f64| p.density(t).unwrap_or(0.0);
        let (v, _) = integrate(f, lo, hi, 1e-12, 1e-12);
        // Mass beyond the integration range is added back exactly.
        let total = v + p.survivor(hi) + p.cdf(lo);
        assert!((total - 1.0).abs() < 1e-8, "{p:?}: {total}");
    }
}

#[test]
fn survivor_is_monotone_and_normalized() {
    for p in examples() {
        if p.family() != Family::Gev {
            assert_eq!(p.survivor(0.0), 1.0);
        }
        let g = grid(&p);
        for w in g.windows(2) {
            assert!(p.cumulative_hazard(w[1]) >= p.cumulative_hazard(w[0]));
        }
    }
}

#[test]
fn documented_values() {
    let e = Params::Exponential { sigma: 1.38 };
    assert!((e.hazard(3.0).unwrap() - 1.0 / 1.38).abs() < 1e-15);
    assert!((e.survivor(1.0) - 0.4845).abs() < 5e-4);
    let g = Params::Gompertz { sigma: 2.0, beta: 0.3 };
    assert!((g.hazard(0.0).unwrap() - 0.5).abs() < 1e-15);
    let gp = Params::GenPareto { sigma: 1.546, xi: -0.108 };
    assert!((gp.density(0.0).unwrap() - 1.0 / 1.546).abs() < 1e-15);
    let one = Params::Exponential { sigma: 1.0 };
    assert!((one.density(2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    assert!((one.quantile(1.0 - (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn logistic_hazard_plateaus() {
    let p = Params::LogisticBeard { lambda: 0.1, a: 0.9, b: 1.5, gamma: 0.4 };
    let h = p.hazard(500.0).unwrap();
    assert!((h - (0.1 + 0.9 / 1.5)).abs() < 1e-12);
    // Cumulative hazard stays finite and accurate far in the tail.
    let (v, _) = integrate(|t| p.hazard(t).unwrap(), 0.0, 80.0, 1e-12, 1e-12);
    assert!((p.cumulative_hazard(80.0) - v).abs() < 1e-9 * v);
}

#[test]
fn gompertz_small_beta_matches_exponential() {
    let sigma = 1.7;
    let beta = 1e-8;
    let g = Params::Gompertz { sigma, beta };
    let e = Params::Exponential { sigma };
    for t in [0.01, 0.1, 1.0, 5.0, 10.0] {
        // log S = -t/sigma - beta t^2 / (2 sigma^2) + O(beta^2)
        let second = -t / sigma - beta * t * t / (2.0 * sigma * sigma);
        assert!((g.log_survivor(t) - second).abs() < 1e-15 * t.max(1.0) * 10.0);
        assert!((g.survivor(t) - e.survivor(t)).abs() <= beta * t * t / (sigma * sigma));
    }
    assert!((g.survivor(0.01) - e.survivor(0.01)).abs() < 1e-10);
}

#[test]
fn gompertz_makeham_cumulative_hazard_display() {
    let (sigma, beta, lambda) = (3.0, 0.5, 0.2);
    let p = Params::GompertzMakeham { sigma, beta, lambda };
    for t in [0.0, 0.3, 2.0, 7.5, 20.0] {
        let direct = lambda * t + ((beta * t / sigma).exp() - 1.0) / beta;
        assert!((p.cumulative_hazard(t) - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}

#[test]
fn weibull_gp_with_unit_beta_is_gp() {
    let w = Params::WeibullGp { sigma: 1.3, beta: 1.0, xi: -0.2 };
    let g = Params::GenPareto { sigma: 1.3, xi: -0.2 };
    for t in [0.1, 1.0, 3.0, 6.0] {
        assert!((w.survivor(t) - g.survivor(t)).abs() < 1e-14);
    }
    assert!((w.support().1 - g.support().1).abs() < 1e-12);
}

#[test]
fn gp_is_continuous_across_zero_shape() {
    // Against the first-order expansion in xi about the exponential branch.
    let sigma = 1.5;
    let z = Params::GenPareto { sigma, xi: 0.0 };
    for xi in [1e-7, -1e-7] {
        let p = Params::GenPareto { sigma, xi };
        for t in [0.5, 2.0, 8.0] {
            let r = t / sigma;
            let ls = z.log_survivor(t) + xi * r * r / 2.0;
            assert!((p.log_survivor(t) - ls).abs() < 1e-12);
            let lf = z.log_density(t).unwrap() + xi * (r * r / 2.0 - r);
            assert!((p.log_density(t).unwrap() - lf).abs() < 1e-12);
            assert!((p.survivor(t) - z.survivor(t)).abs() < 1e-5 * z.survivor(t));
        }
    }
}

#[test]
fn gp_hazard_diverges_at_endpoint() {
    let p = Params::GenPareto { sigma: 1.546, xi: -0.108 };
    let end = p.support().1;
    assert!((end - 1.546 / 0.108).abs() < 1e-12);
    assert!(p.hazard(end - 1e-9).unwrap() > 1e6);
    assert!(p.hazard(end).is_err());
    assert!(p.hazard(-0.1).is_err());
    assert_eq!(p.inverse_cumulative_hazard(f64::INFINITY), end);
    let q = p.quantile(1.0 - 1e-15).unwrap();
    assert!(q < end && q > p.quantile(0.999).unwrap());
    assert!((p.inverse_cumulative_hazard(1e6) - end).abs() < 1e-12);
}

#[test]
fn quantiles_invert_the_cdf() {
    for p in examples() {
        for i in 1..100 {
            let pr = i as f64 / 100.0;
            let q = p.quantile(pr).unwrap();
            assert!((p.cdf(q) - pr).abs() < 1e-10, "{p:?} p={pr} q={q}");
        }
        assert!(p.quantile(0.0).is_err());
        assert!(p.quantile(1.0).is_err());
    }
}

#[test]
fn gompertz_makeham_root_finder_round_trips() {
    let mut r = crate::rng::stream(11, 0);
    for _ in 0..50 {
        let p = Params::GompertzMakeham {
            sigma: r.gen_range(0.2..5.0),
            beta: r.gen_range(0.0..2.0),
            lambda: r.gen_range(0.0..1.0),
        };
        for i in 1..50 {
            let pr = i as f64 / 50.0;
            let q = p.quantile(pr).unwrap();
            assert!((pr - p.cdf(q)).abs() < 1e-10);
        }
    }
}

#[test]
fn piecewise_density_is_continuous_at_knots() {
    let p = Params::PiecewiseGp { knots: vec![0.0, 1.0, 2.5], sigma: 1.4, xi: vec![-0.2, 0.1, -0.3] };
    for u in [1.0, 2.5] {
        let left = p.density(u - 1e-12).unwrap();
        let right = p.density(u).unwrap();
        assert!((left - right).abs() < 1e-9, "{left} {right}");
    }
    let bad = Params::PiecewiseGp { knots: vec![0.0, 2.0], sigma: 1.0, xi: vec![-0.6, 0.0] };
    assert!(bad.validate().is_err());
}

#[test]
fn piecewise_with_one_piece_is_gp() {
    let pw = Params::PiecewiseGp { knots: vec![0.0], sigma: 1.546, xi: vec![-0.108] };
    let gp = Params::GenPareto { sigma: 1.546, xi: -0.108 };
    let x = pw.sample_seeded(10_000, 5, None).unwrap();
    let ks = ks_one_sample(&x, |t| gp.cdf(t));
    assert!(ks.p_value > 0.01, "{ks:?}");
    for t in [0.5, 3.0, 9.0] {
        assert!((pw.survivor(t) - gp.survivor(t)).abs() < 1e-15);
    }
}

#[test]
fn exponential_sample_mean() {
    let sigma = 1.0 / std::f64::consts::LN_2;
    let p = Params::Exponential { sigma };
    let n = 100_000;
    let x = p.sample_seeded(n, 42, None).unwrap();
    assert!((mean(&x) - sigma).abs() < 3.0 * sigma / (n as f64).sqrt());
}

#[test]
fn gp_draws_stay_below_endpoint() {
    let p = Params::GenPareto { sigma: 1.546, xi: -0.108 };
    let x = p.sample_seeded(20_000, 3, None).unwrap();
    assert!(x.iter().all(|&t| t < 14.315 && t >= 0.0));
}

#[test]
fn truncated_sampling_respects_set() {
    let p = Params::Gompertz { sigma: 2.0, beta: 0.3 };
    let set = TruncationSet::new([crate::record::Interval::new(0.5, 1.0), crate::record::Interval::new(3.0, 4.0)]);
    let x = p.sample_seeded(20_000, 9, Some(&set)).unwrap();
    assert!(x.iter().all(|&t| set.contains(t)));
    let lp = p.log_prob_set(&set);
    let cdf = |t: f64| {
        let clip = set.intersect_interval(0.0, t);
        (p.log_prob_set(&clip) - lp).exp()
    };
    assert!(ks_one_sample(&x, cdf).p_value > 0.01);
    let tiny = TruncationSet::single(200.0, 201.0);
    assert!(p.sample_seeded(1, 1, Some(&tiny)).is_err());
}

#[test]
fn gp_threshold_stability_in_distribution() {
    let (sigma, xi, v) = (1.5, -0.1, 1.0);
    let p = Params::GenPareto { sigma, xi };
    let x: Vec<f64> = p
        .sample_seeded(60_000, 17, None)
        .unwrap()
        .into_iter()
        .filter(|&t| t > v)
        .map(|t| t - v)
        .take(10_000)
        .collect();
    assert_eq!(x.len(), 10_000);
    let q = Params::GenPareto { sigma: gp_threshold_rescale(sigma, xi, v).unwrap(), xi };
    assert!(ks_one_sample(&x, |t| q.cdf(t)).p_value > 0.01);
}

#[test]
fn gev_block_maxima_match_rescaled_gev() {
    let (eta, tau, xi) = (0.0, 1.0, -0.1);
    let base = Params::Gev { eta, tau, xi };
    let n = 64;
    let mut r = crate::rng::stream(23, 0);
    let maxima: Vec<f64> = (0..4000)
        .map(|_| base.sample(n, &mut r, None).unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let (e, t, x) = gev_rescale(eta, tau, xi, n as f64);
    let target = Params::Gev { eta: e, tau: t, xi: x };
    assert!(ks_one_sample(&maxima, |v| target.cdf(v)).p_value > 0.01);
}

fn fd_reciprocal_hazard(p: &Params, u: f64) -> f64 {
    let h = 1e-5 * u.abs().max(1.0);
    let r = |t: f64| 1.0 / p.hazard(t).unwrap();
    (r(u + h) - r(u - h)) / (2.0 * h)
}

#[test]
fn penultimate_closed_forms_match_finite_differences() {
    for p in [
        Params::Gompertz { sigma: 2.0, beta: 0.3 },
        Params::GompertzMakeham { sigma: 3.0, beta: 0.5, lambda: 0.2 },
        Params::ExtGp { sigma: 1.5, beta: 0.4, xi: 0.1 },
        Params::WeibullGp { sigma: 1.0, beta: 0.8, xi: 0.3 },
        Params::GenPareto { sigma: 1.5, xi: -0.1 },
    ] {
        for u in [0.5, 1.0, 3.0] {
            let a = p.penultimate_shape(u).unwrap();
            let b = fd_reciprocal_hazard(&p, u);
            assert!((a - b).abs() < 1e-6, "{p:?} u={u}: {a} vs {b}");
        }
    }
}

#[test]
fn penultimate_limits() {
    let gm = Params::GompertzMakeham { sigma: 2.0, beta: 0.7, lambda: 0.0 };
    assert!((gm.penultimate_shape(0.0).unwrap() + 0.7).abs() < 1e-15);
    let w = Params::WeibullGp { sigma: 1.3, beta: 2.0, xi: 0.2 };
    assert!((w.penultimate_shape(1.3e4).unwrap() - 0.1).abs() < 1e-6);
    let gp = Params::GenPareto { sigma: 1.3, xi: -0.2 };
    for u in [0.0, 1.0, 6.0] {
        assert_eq!(gp.penultimate_shape(u).unwrap(), -0.2);
    }
    assert!(Params::Gev { eta: 0.0, tau: 1.0, xi: 0.1 }.penultimate_shape(1.0).is_err());
}

#[test]
fn params_json_round_trip() {
    for p in examples() {
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"family\""));
        let back: Params = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
    let p: Params = serde_json::from_str(r#"{"family":"gen_pareto","sigma":1.5,"xi":-0.1}"#).unwrap();
    assert_eq!(p, Params::GenPareto { sigma: 1.5, xi: -0.1 });
}

#[test]
fn families_parse() {
    for f in Family::ALL {
        assert_eq!(f.name().parse::<Family>().unwrap(), f);
    }
    assert!("weibull".parse::<Family>().is_err());
}
