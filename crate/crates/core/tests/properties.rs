use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mnsurv::checks::random_weights;
use mnsurv::quadrature::{integrate_region, integrate_region_mc};
use mnsurv::report;
use mnsurv::survival::{survival_dirichlet, survival_exact, survival_gaussian, survival_mc};
use mnsurv::{
    build_instance, compare_routes, reduce_thresholds, CovarianceStructure, MonteCarloSpec,
    ProbabilityWeights, QuadratureSpec,
};

/// Weights for `d` free cells, each cell (including the last) at least 0.02.
fn weights_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, d + 1).prop_map(move |raw| {
        let total: f64 = raw.iter().sum();
        let free = 1.0 - 0.02 * (d + 1) as f64;
        raw[..d].iter().map(|x| 0.02 + free * x / total).collect()
    })
}

fn instance_strategy(max_n: u64, max_d: usize) -> impl Strategy<Value = (u64, Vec<f64>, Vec<u64>)> {
    (1..=max_d)
        .prop_flat_map(move |d| (Just(d), 1..=max_n, weights_strategy(d)))
        .prop_flat_map(|(d, n, p)| {
            let k = prop::collection::vec(0..=n.max(1), d);
            (Just(n), Just(p), k)
        })
}

/// `P(Bin(n, p) >= k)` with integer binomial coefficients.
fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    let mut total = 0.0;
    for x in k..=n {
        let mut c = 1u128;
        for i in 0..x {
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        total += c as f64 * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32);
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gap_and_deviation_sums((n, p, k) in instance_strategy(40, 4)) {
        let inst = build_instance(n, &p, &k).unwrap();
        prop_assume!(!inst.is_impossible() && inst.big_n() > 0);
        let total: i64 = inst.big_j().iter().sum();
        prop_assert_eq!(total, inst.big_n());
        let dev: f64 = inst.eps_tilde().iter().sum();
        prop_assert!(dev.abs() < 1e-14);
        for (i, (&e, &et)) in inst.eps().iter().zip(inst.eps_tilde()).enumerate() {
            let pi = inst.weights().weight(i);
            prop_assert!((e * pi - et).abs() <= 1e-15);
        }
    }

    #[test]
    fn reduction_is_idempotent_and_preserves_probability((n, p, k) in instance_strategy(8, 3)) {
        let (p1, k1) = reduce_thresholds(&p, &k);
        let (p2, k2) = reduce_thresholds(&p1, &k1);
        prop_assert_eq!(&p1, &p2);
        prop_assert_eq!(&k1, &k2);
        prop_assert!(k1.iter().all(|&x| x > 0));

        let full = survival_exact(&build_instance(n, &p, &k).unwrap()).unwrap();
        let reduced = if k1.is_empty() {
            1.0
        } else {
            survival_exact(&build_instance(n, &p1, &k1).unwrap()).unwrap()
        };
        prop_assert!((full - reduced).abs() <= 1e-13, "{} vs {}", full, reduced);
    }

    #[test]
    fn precision_quadratic_form_is_positive(
        p in (1usize..=6).prop_flat_map(weights_strategy),
        seed in any::<u64>(),
    ) {
        let w = ProbabilityWeights::new(p).unwrap();
        let cov = CovarianceStructure::new(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..w.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assume!(x.iter().any(|&v| v != 0.0));
        prop_assert!(cov.quad_form(&x).unwrap() > 0.0);
    }

    #[test]
    fn routes_agree_on_small_instances((n, p, k) in instance_strategy(14, 2)) {
        let inst = build_instance(n, &p, &k).unwrap();
        let spec = QuadratureSpec::new(48).unwrap();
        let report = compare_routes(&inst, spec, None).unwrap();
        prop_assert!(report.max_rel_diff <= 1e-8, "{:?}", report);
    }
}

#[test]
fn region_membership_matches_nested_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut inside = 0;
    for trial in 0..10_000 {
        let d = 1 + trial % 4;
        let w = random_weights(&mut rng, d, 0.05);
        let s: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.05..0.7)).collect();
        let mut by_limits = true;
        for axis in 0..d {
            if s[axis] < 0.0 {
                by_limits = false;
                break;
            }
            let upper = w.nested_upper_limit(axis, &s[..axis]).unwrap();
            if s[axis] > upper {
                by_limits = false;
                break;
            }
        }
        assert_eq!(w.region_contains(&s).unwrap(), by_limits, "{s:?}");
        inside += by_limits as usize;
    }
    // both branches exercised
    assert!(inside > 500 && inside < 9_500, "{inside}");
}

#[test]
fn binomial_tail_for_single_axis() {
    let spec = QuadratureSpec::new(64).unwrap();
    for (n, p, k) in [(10u64, 0.3, 3u64), (15, 0.55, 9), (25, 0.1, 2), (7, 0.8, 7)] {
        let inst = build_instance(n, &[p], &[k]).unwrap();
        let truth = binomial_tail(n, p, k);
        assert!((survival_exact(&inst).unwrap() - truth).abs() <= 1e-12 * truth);
        assert!((survival_dirichlet(&inst, spec).unwrap() - truth).abs() <= 1e-10 * truth);
        if inst.gaussian_eligible() {
            assert!((survival_gaussian(&inst, spec).unwrap() - truth).abs() <= 1e-8 * truth);
        }
    }
}

#[test]
fn quadrature_refinement_converges() {
    let inst = build_instance(20, &[0.2, 0.5], &[4, 8]).unwrap();
    let f = mnsurv::expansions::DirichletIntegrand::new(&inst).unwrap();
    let value = |g: usize| {
        integrate_region(inst.weights(), |s| f.log_eval(s), QuadratureSpec::new(g).unwrap())
            .unwrap()
            .value
    };
    let diffs: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&g| (value(g) - value(2 * g)).abs())
        .collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
    assert!(diffs[2] < 1e-10);
}

#[test]
fn shifting_the_log_integrand_scales_the_integral() {
    let inst = build_instance(12, &[0.3, 0.3], &[3, 3]).unwrap();
    let f = mnsurv::expansions::DirichletIntegrand::new(&inst).unwrap();
    let spec = QuadratureSpec::new(24).unwrap();
    let base = integrate_region(inst.weights(), |s| f.log_eval(s), spec).unwrap();
    for c in [-800.0, -3.0, 5.0, 900.0] {
        let shifted = integrate_region(inst.weights(), |s| f.log_eval(s) + c, spec).unwrap();
        assert!((shifted.log_value - base.log_value - c).abs() < 1e-12 * (1.0 + c.abs()));
    }
}

#[test]
fn monte_carlo_integral_coverage_over_seeds() {
    // volume of R_2 for p = (0.3, 0.3): P_1 P_2 - P_1^2 / 2 = 0.135
    let w = ProbabilityWeights::new(vec![0.3, 0.3]).unwrap();
    let covered = (0..50u64)
        .filter(|&seed| {
            let est = integrate_region_mc(&w, |_| 0.0, MonteCarloSpec::new(20_000, seed).unwrap())
                .unwrap();
            (est.estimate - 0.135).abs() <= 4.0 * est.stderr
        })
        .count();
    assert!(covered >= 48, "{covered} of 50");
}

#[test]
fn monte_carlo_route_panel_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut covered = 0;
    for i in 0..20u64 {
        let d = 1 + (i as usize) % 3;
        let w = random_weights(&mut rng, d, 0.05);
        let n = rng.gen_range(d as u64 + 2..=15);
        let k: Vec<u64> = (0..d).map(|_| rng.gen_range(1..=(n / d as u64).max(1))).collect();
        let inst = build_instance(n, w.p(), &k).unwrap();
        let truth = survival_exact(&inst).unwrap();
        let est = survival_mc(&inst, MonteCarloSpec::new(1_000_000, 100 + i).unwrap()).unwrap();
        if (est.estimate - truth).abs() <= 4.0 * est.stderr.max(1e-300) {
            covered += 1;
        }
    }
    assert!(covered >= 19, "{covered} of 20");
}

#[test]
fn monte_carlo_is_reproducible() {
    let inst = build_instance(10, &[0.2, 0.3], &[2, 3]).unwrap();
    let spec = MonteCarloSpec::new(50_000, 42).unwrap();
    let a = survival_mc(&inst, spec).unwrap();
    let b = survival_mc(&inst, spec).unwrap();
    assert_eq!(a, b);
    let c = survival_mc(&inst, MonteCarloSpec::new(50_000, 43).unwrap()).unwrap();
    assert_ne!(a.estimate, c.estimate);
}

#[test]
fn reports_round_trip_through_json() {
    let spec = QuadratureSpec::new(32).unwrap();
    let reports: Vec<_> = [
        build_instance(10, &[0.3, 0.3], &[2, 2]).unwrap(),
        build_instance(2, &[0.5, 0.2], &[1, 0]).unwrap(),
        build_instance(3, &[0.5, 0.2], &[2, 2]).unwrap(),
    ]
    .iter()
    .map(|inst| compare_routes(inst, spec, Some(MonteCarloSpec::new(5_000, 1).unwrap())).unwrap())
    .collect();
    let text = report::to_json_array(&reports);
    let back = report::from_json(&text).unwrap();
    assert_eq!(back, reports);
    assert_eq!(report::to_json_array(&back), text);
    let csv = report::to_csv(&reports).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
