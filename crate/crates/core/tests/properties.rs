use longtail::lexis::{excess_interval, idl_observable_set};
use longtail::likelihood::{loglik_exceedances, record_loglik};
use longtail::nonparam::{kaplan_meier, turnbull_em_traced, EmOptions};
use longtail::simlab::RateFunction;
use longtail::{CalendarDate, Event, FrameKind, LifetimeRecord, Params, SamplingFrame, TruncationSet};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

fn law() -> impl Strategy<Value = Params> {
    prop_oneof![
        (0.3f64..5.0).prop_map(|sigma| Params::Exponential { sigma }),
        (0.3f64..5.0, 0.01f64..1.0).prop_map(|(sigma, beta)| Params::Gompertz { sigma, beta }),
        (0.3f64..5.0, -0.4f64..0.4).prop_map(|(sigma, xi)| Params::GenPareto { sigma, xi }),
        (0.3f64..5.0, 0.01f64..1.0, 0.001f64..0.2)
            .prop_map(|(sigma, beta, lambda)| Params::GompertzMakeham { sigma, beta, lambda }),
    ]
}

fn date(days: i64) -> CalendarDate {
    CalendarDate::from_days(days)
}

/// Interval-truncated and right-censored records in `[0, 10]`.
fn records() -> impl Strategy<Value = Vec<LifetimeRecord>> {
    prop::collection::vec((0.0f64..3.0, 0.5f64..7.0, 0.0f64..1.0, prop::bool::ANY), 2..25).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (a, w, u, censored))| {
                let b = a + w;
                let t = a + u * w;
                let r = if censored { LifetimeRecord::left_truncated(b + 1.0, a, t) } else { LifetimeRecord::interval_truncated(t, a, b) };
                r.with_id(format!("{i}"))
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn dates_round_trip_through_text(days in -30000i64..120000) {
        let d = date(days);
        let back: CalendarDate = d.to_string().parse().unwrap();
        prop_assert_eq!(back, d);
        prop_assert!(date(days + 1) > d);
    }

    #[test]
    fn excess_interval_is_translation_equivariant(c1 in 0i64..40000, width in 1i64..8000, lag in -9000i64..7999, shift in -20000i64..20000) {
        let lag = lag.min(width - 1);
        let f = SamplingFrame::single(FrameKind::IntervalTruncated, date(c1), date(c1 + width), 105.0).unwrap();
        let g = SamplingFrame::single(FrameKind::IntervalTruncated, date(c1 + shift), date(c1 + width + shift), 105.0).unwrap();
        let x = date(c1 + lag);
        let y = date(c1 + lag + shift);
        let (a, b) = excess_interval(x, &f).unwrap();
        prop_assert_eq!((a, b), excess_interval(y, &g).unwrap());
        prop_assert!(a >= 0.0 && b > a);
    }

    #[test]
    fn aligned_dual_frame_is_a_single_window(c1 in 60000i64..70000, width in 400i64..8000, lag in -4000i64..7999) {
        let lag = lag.min(width - 1);
        let (c1, c2) = (date(c1), date(c1 + width));
        let x = c1.add_days(lag);
        let single = SamplingFrame::single(FrameKind::IntervalTruncated, c1, c2, 105.0).unwrap();
        let dual = SamplingFrame::idl(c1, c2, c1, c2).unwrap();
        let (a, b) = excess_interval(x, &single).unwrap();
        let set = idl_observable_set(x, &dual).unwrap();
        prop_assert_eq!(set.lower(), a);
        prop_assert_eq!(set.upper(), b);
        for k in 0..=200 {
            let t = a + (b - a) * k as f64 / 200.0;
            prop_assert!(set.contains(t), "{} not in {:?}", t, set);
        }
    }

    #[test]
    fn survivor_hazard_identities(p in law(), t in 0.0f64..8.0) {
        let s = p.survivor(t);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((p.cdf(t) + s - 1.0).abs() < 1e-12);
        if s > 1e-300 {
            prop_assert!((p.cumulative_hazard(t) + s.ln()).abs() < 1e-9 * p.cumulative_hazard(t).max(1.0));
        }
        prop_assert!(p.survivor(t + 0.1) <= s);
    }

    #[test]
    fn quantile_inverts_cdf(p in law(), q in 0.001f64..0.999) {
        let t = p.quantile(q).unwrap();
        prop_assert!((p.cdf(t) - q).abs() < 1e-8, "{} {}", p.cdf(t), q);
    }

    #[test]
    fn gp_threshold_stability(sigma in 0.3f64..4.0, xi in -0.4f64..0.4, v in 0.0f64..2.0, t in 0.0f64..5.0) {
        let p = Params::GenPareto { sigma, xi };
        prop_assume!(p.survivor(v) > 1e-6);
        let shifted = Params::GenPareto { sigma: sigma + xi * v, xi };
        prop_assert!((p.survivor(v + t) / p.survivor(v) - shifted.survivor(t)).abs() < 1e-10);
    }

    #[test]
    fn loglik_ignores_record_order(p in law(), recs in records()) {
        let mut rev = recs.clone();
        rev.reverse();
        let a = loglik_exceedances(&p, &recs);
        let b = loglik_exceedances(&p, &rev);
        prop_assert!(a == b || (a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} {}", a, b);
    }

    #[test]
    fn observed_contribution_is_conditional_density(p in law(), recs in records()) {
        for r in recs.iter().filter(|r| r.event.is_observed()) {
            let Event::Observed { time } = r.event else { unreachable!() };
            let mass = p.survivor(r.truncation.lower()) - p.survivor(r.truncation.upper());
            let Ok(ld) = p.log_density(time) else { continue };
            if !(mass > 1e-12) {
                continue;
            }
            let expect = ld - mass.ln();
            prop_assert!((record_loglik(&p, r) - expect).abs() < 1e-8 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn turnbull_is_a_distribution_with_monotone_loglik(recs in records()) {
        let (est, trace) = turnbull_em_traced(&recs, None, &EmOptions { variance: false, ..Default::default() }).unwrap();
        let total: f64 = est.mass.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(est.mass.iter().all(|&m| m >= 0.0));
        prop_assert!(est.survivor.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for w in trace.loglik.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn kaplan_meier_survivor_is_monotone(rows in prop::collection::vec((0.0f64..3.0, 0.0f64..6.0, 0.5f64..6.0), 1..30)) {
        let recs: Vec<LifetimeRecord> = rows.iter().map(|&(a, t, c)| LifetimeRecord::left_truncated(a + t, a, a + c)).collect();
        let km = kaplan_meier(&recs).unwrap();
        prop_assert!(km.survivor.iter().all(|&s| (0.0..=1.0).contains(&s)));
        prop_assert!(km.survivor.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rate_integral_is_additive(ys in prop::collection::vec(0.0f64..10.0, 2..6), a in -1.0f64..6.0, m in 0.0f64..1.0, len in 0.0f64..6.0) {
        let knots: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
        let r = RateFunction::new(knots).unwrap();
        let b = a + len;
        let c = a + m * len;
        prop_assert!((r.integral(a, b) - r.integral(a, c) - r.integral(c, b)).abs() < 1e-10);
    }

    #[test]
    fn truncation_sets_are_disjoint_and_sorted(ivs in prop::collection::vec((0.0f64..20.0, 0.0f64..5.0), 1..6)) {
        let set = TruncationSet::new(ivs.iter().map(|&(a, w)| longtail::Interval::new(a, a + w)));
        for w in set.intervals().windows(2) {
            prop_assert!(w[0].upper < w[1].lower);
        }
        for &(a, w) in &ivs {
            prop_assert!(set.contains(a + 0.5 * w));
        }
    }
}
