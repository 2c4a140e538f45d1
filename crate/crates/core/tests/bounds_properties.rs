//! Invariants of the bound formulas and the experiment-level trends they
//! are meant to describe.

use std::sync::Arc;

use finrank_krr::bounds::{self, BoundOptions};
use finrank_krr::experiment::{run_trials, summarize};
use finrank_krr::kernel::SpectralKernel;
use finrank_krr::target::TargetSpec;
use proptest::prelude::*;

fn tntk_cos() -> TargetSpec {
    TargetSpec::tntk_cosine(Arc::new(SpectralKernel::tntk(7).unwrap())).unwrap()
}

fn legendre_x2() -> TargetSpec {
    TargetSpec::legendre_x_squared(Arc::new(SpectralKernel::legendre(5).unwrap())).unwrap()
}

#[test]
fn consistent_bias_upper_increases_in_ridge() {
    let t = tntk_cos();
    let grid: Vec<f64> = (0..40).map(|i| 10f64.powf(-7.0 + 0.15 * i as f64)).collect();
    for n in [20, 100, 1000] {
        let ups: Vec<f64> = grid.iter().map(|&l| bounds::refined_bias_bounds(&t, n, l, false).unwrap().upper).collect();
        assert!(ups.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn baseline_variance_decreases_in_ridge() {
    let t = tntk_cos();
    let grid: Vec<f64> = (0..40).map(|i| 10f64.powf(-7.0 + 0.15 * i as f64)).collect();
    let v: Vec<f64> = grid.iter().map(|&l| bounds::bach_bounds(&t, 50, l, 0.05, 0.04).unwrap().variance_upper).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn consistent_bias_upper_below_baseline_bias() {
    for t in [tntk_cos(), legendre_x2()] {
        for n in 9..2000 {
            for lambda in [1e-6, 1e-3, 1.0] {
                let ours = bounds::refined_bias_bounds(&t, n, lambda, false).unwrap().upper;
                let bach = bounds::bach_bounds(&t, n, lambda, 0.05, 2.0 / n as f64).unwrap().bias_upper;
                assert!(ours <= bach, "N={n}, λ={lambda}");
            }
        }
    }
}

#[test]
fn confidence_is_one_minus_two_over_n() {
    let t = legendre_x2();
    for n in [3, 10, 77, 1000] {
        let r = bounds::bounds_report(&t, n, 1e-3, 0.05, BoundOptions::default()).unwrap();
        assert_eq!(r.confidence, 1.0 - 2.0 / n as f64);
    }
}

#[test]
fn sweep_medians_decrease_in_n() {
    let t = tntk_cos();
    let lambda = 0.05 / 50.0;
    let medians: Vec<f64> = [10, 25, 50, 100, 200]
        .iter()
        .map(|&n| summarize(&run_trials(&t, n, lambda, 0.05, 10, 4242).unwrap()).median)
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn variance_dominated_median_near_sigma2_m_over_n() {
    let t = tntk_cos();
    let (n, sigma2) = (200, 0.05);
    let trials = run_trials(&t, n, sigma2 / n as f64, sigma2, 10, 8080).unwrap();
    let v: Vec<f64> = trials.iter().map(|r| r.report.variance).collect();
    let med = finrank_krr::stats::median(&v);
    let reference = sigma2 * 7.0 / n as f64;
    assert!((med / reference - 1.0).abs() < 0.5, "{med} vs {reference}");
}

#[test]
fn enclosure_gap_shrinks_in_n() {
    let t = legendre_x2();
    let gaps: Vec<f64> = (10..=200)
        .step_by(5)
        .map(|n| bounds::enclosure_bounds(&t, n, 0.05 / n as f64, 0.05).unwrap().width())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn upper_bound_insensitive_to_tiny_ridge() {
    let t = tntk_cos();
    let ups: Vec<f64> = (0..=20)
        .map(|i| 10f64.powf(-6.0 + 0.1 * i as f64))
        .map(|l| bounds::test_error_bounds(&t, 50, l, 0.05, false).unwrap().upper)
        .collect();
    let (lo, hi) = ups.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &u| (a.min(u), b.max(u)));
    assert!(hi / lo < 1.2, "{lo} .. {hi}");
}

proptest! {
    #[test]
    fn residue_bounds_are_ordered(
        gamma in proptest::collection::vec(-2.0f64..2.0, 7),
        gamma_plus in -1.0f64..1.0,
        n in 3usize..100_000,
        lambda in prop_oneof![Just(0.0), 1e-9f64..10.0],
        sigma2 in 0.0f64..1.0,
    ) {
        let k = Arc::new(SpectralKernel::tntk(7).unwrap());
        let t = TargetSpec::new(k, gamma, gamma_plus).unwrap();
        let r = bounds::bounds_report(&t, n, lambda, sigma2, BoundOptions::default()).unwrap();
        prop_assert!(r.bias_lower <= r.bias_upper);
        prop_assert!(r.variance_lower <= r.variance_upper);
        prop_assert!(r.test_lower <= r.test_upper);
        prop_assert!(r.bias_lower >= 0.0 && r.variance_lower >= 0.0);
    }

    #[test]
    fn rademacher_halves_when_n_quadruples(n in 1usize..100_000, tau in 1e-6f64..1.0, c in 1e-3f64..10.0) {
        let a = bounds::rademacher_gap(n, tau, c).unwrap();
        let b = bounds::rademacher_gap(4 * n, tau, c).unwrap();
        prop_assert!((a / b - 2.0).abs() < 1e-12);
    }
}
