mod support;

use momentcard_core::oracle::{brute_force_card, l1_heuristic, max_violation, rounded_bound};
use momentcard_core::sdp::SolverConfig;
use proptest::prelude::*;
use support::{card, planted};

/// Feasibility of `{a x ≥ b}` over the reals: the intersection of half-lines.
fn interval_feasible(coefs: &[f64], b: &[f64]) -> bool {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&c, &bj) in coefs.iter().zip(b) {
        if c > 0.0 {
            lo = lo.max(bj / c);
        } else if c < 0.0 {
            hi = hi.min(bj / c);
        } else if bj > 1e-12 {
            return false;
        }
    }
    lo <= hi + 1e-12
}

/// Minimum cardinality in two variables by direct case analysis.
fn card_two(a: &[Vec<f64>], b: &[f64]) -> usize {
    if b.iter().all(|&bj| bj <= 0.0) {
        return 0;
    }
    for i in 0..2 {
        let coefs: Vec<f64> = a.iter().map(|r| r[i]).collect();
        if interval_feasible(&coefs, b) {
            return 1;
        }
    }
    2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brute_force_matches_case_analysis(seed in any::<u64>(), rows in 1usize..4) {
        let inst = planted(2, rows, seed);
        let report = brute_force_card(&inst.a, &inst.b, &SolverConfig::default()).unwrap();
        prop_assert_eq!(report.optimum, card_two(&inst.a, &inst.b));
        prop_assert!(report.optimum <= card(&inst.x, 0.0));
        prop_assert!(max_violation(&inst.a, &inst.b, &report.witness) <= 1e-6);
        prop_assert_eq!(report.support.len(), report.optimum);
        for (i, &w) in report.witness.iter().enumerate() {
            prop_assert!(w == 0.0 || report.support.contains(&i));
        }
    }

    #[test]
    fn l1_point_is_feasible_and_no_sparser_than_optimal(seed in any::<u64>(), n in 1usize..5, rows in 1usize..4) {
        let inst = planted(n, rows, seed);
        let cfg = SolverConfig::default();
        let (value, x) = l1_heuristic(&inst.a, &inst.b, &cfg).unwrap();
        let report = brute_force_card(&inst.a, &inst.b, &cfg).unwrap();
        prop_assert!(max_violation(&inst.a, &inst.b, &x) <= 1e-6);
        prop_assert!((value - x.iter().map(|v| v.abs()).sum::<f64>()).abs() <= 1e-6);
        prop_assert!(card(&x, 1e-7) >= report.optimum);
        let planted_norm: f64 = inst.x.iter().map(|v| v.abs()).sum();
        prop_assert!(value <= planted_norm + 1e-6);
    }
}

#[test]
fn rounding_examples() {
    assert_eq!(rounded_bound(1.0), 1);
    assert_eq!(rounded_bound(0.99995), 1);
    assert_eq!(rounded_bound(0.9998), 1);
    assert_eq!(rounded_bound(1.00005), 1);
    assert_eq!(rounded_bound(1.0002), 2);
    assert_eq!(rounded_bound(-1e-9), 0);
}

#[test]
fn infeasible_systems_are_reported() {
    let a = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
    let b = vec![1.0, 0.0];
    assert!(brute_force_card(&a, &b, &SolverConfig::default()).is_err());
    assert!(l1_heuristic(&a, &b, &SolverConfig::default()).is_err());
}
