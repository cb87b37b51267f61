mod common;

use proptest::prelude::*;

use common::*;
use twostop::model::{payoff_w1, payoff_w2, payoff_z, DistributionSpec, ProblemSpec};
use twostop::numerics::{GridSpec, ValueField};
use twostop::policy::{stop_index, Claim, StagePolicy};
use twostop::sim::{sample_stage, stream_rng};
use twostop::stage2::Stage2Operator;

fn laws() -> Vec<DistributionSpec> {
    vec![
        DistributionSpec::Exponential { rate: 1.7 },
        DistributionSpec::Weibull { shape: 0.8, scale: 1.2 },
        DistributionSpec::Weibull { shape: 2.5, scale: 0.6 },
        DistributionSpec::Gamma { shape: 0.6, rate: 1.0 },
        DistributionSpec::Gamma { shape: 3.0, rate: 2.0 },
        DistributionSpec::Uniform { low: 0.2, high: 1.4 },
    ]
}

/// Kolmogorov–Smirnov distance of the first inter-arrival draw of many
/// replications against the cdf.
#[test]
fn inverse_cdf_sampling_matches_the_law() {
    let n = 20_000;
    for law in laws() {
        let site = twostop::model::SiteModel {
            inter_arrival: law.clone(),
            ..linear_site(1.0, 0.1)
        };
        let mut gaps: Vec<f64> = (0..n)
            .filter_map(|k| sample_stage(&site, 0.0, 1e6, stream_rng(17, k, 0)).next())
            .map(|c| c.time)
            .collect();
        assert_eq!(gaps.len(), n as usize);
        gaps.sort_by(f64::total_cmp);
        let d = gaps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = law.cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1.63 / sqrt(n) is the 1% critical value
        assert!(d < 1.63 / (n as f64).sqrt(), "{law:?}: D = {d}");
    }
}

#[test]
fn quantile_inverts_cdf() {
    for law in laws() {
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let x = law.quantile(u);
            assert!((law.cdf(x) - u).abs() < 1e-9, "{law:?} at {u}");
        }
    }
}

fn small_op(spec: &ProblemSpec) -> (Stage2Operator, usize) {
    let grid = GridSpec::for_problem(spec, 9, 7, 6).unwrap();
    let op = Stage2Operator::new(spec, &grid).unwrap();
    let n = op.zero_field().values().len();
    (op, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn phi2_is_monotone_nonnegative_and_contracting(
        seed in prop::collection::vec(-3.0f64..3.0, 9 * 7 * 7),
        bump in prop::collection::vec(0.0f64..1.0, 9 * 7 * 7),
    ) {
        let spec = weibull_instance();
        let (op, n) = small_op(&spec);
        let lo = ValueField::new(op.axes(), seed[..n].to_vec()).unwrap();
        let hi = ValueField::new(op.axes(), seed[..n].iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let (plo, rlo) = op.apply(&lo);
        let (phi, _) = op.apply(&hi);
        let t = op.axes()[2].1;
        for (i, (a, b)) in plo.values().iter().zip(phi.values()).enumerate() {
            prop_assert!(*a >= 0.0);
            prop_assert!(b + 1e-10 >= *a, "not monotone at {}", i);
            let c = t.node(i % t.n);
            let r = rlo.values()[i];
            prop_assert!((0.0..=c + 1e-12).contains(&r), "r* = {} outside [0, {}]", r, c);
        }
        prop_assert!(plo.distance(&phi) <= op.modulus() * lo.distance(&hi) + 1e-9);
    }

    #[test]
    fn payoff_branches(m in 0.0f64..5.0, extra in 0.0f64..5.0, s in 0.0f64..2.0, dt in 0.0f64..2.0) {
        let spec = weibull_instance();
        let t0 = spec.horizon;
        let t = s + dt;
        let z = payoff_z(&spec, s, t, m, m + extra);
        if t > t0 {
            prop_assert_eq!(z, -spec.penalty());
        } else {
            let w2 = payoff_w2(&spec, m, s, m + extra, t);
            prop_assert!((z - w2).abs() < 1e-12);
            // switching and stopping at once pays w1 plus the fresh site-2 terms
            let w1 = payoff_w1(&spec, m, s).unwrap();
            let fresh = spec.site2.utility.value(0.0) - spec.site2.cost.value(0.0);
            prop_assert!((payoff_w2(&spec, m, s, m, s) - (w1 + fresh)).abs() < 1e-12);
        }
    }

    #[test]
    fn stop_index_respects_the_horizon(
        gaps in prop::collection::vec(0.01f64..1.0, 0..12),
        masses in prop::collection::vec(0.0f64..2.0, 12),
        delay in 0.0f64..3.0,
    ) {
        let horizon = 2.0;
        let mut now = 0.0;
        let claims: Vec<Claim> = gaps.iter().zip(&masses).map(|(g, m)| {
            now += g;
            Claim { time: now, mass: *m }
        }).collect();
        let policy = StagePolicy::NeverStop.scaled(delay / horizon);
        let out = stop_index(&policy, claims.clone(), 0.0, horizon);
        prop_assert!(out.time <= horizon);
        prop_assert!(out.claims.iter().all(|c| c.time <= out.time));
        let mass: f64 = out.claims.iter().map(|c| c.mass).sum();
        prop_assert!((mass - out.mass).abs() < 1e-12);
        // every taken catch is a prefix of the stream
        prop_assert_eq!(&claims[..out.index], &out.claims[..]);
        let never = stop_index(&StagePolicy::NeverStop, claims.clone(), 0.0, horizon);
        prop_assert_eq!(never.time, horizon);
        prop_assert_eq!(never.index, claims.iter().filter(|c| c.time <= horizon).count());
        let now = stop_index(&StagePolicy::StopNow, claims, 0.0, horizon);
        prop_assert_eq!((now.index, now.time), (0, 0.0));
    }
}
