mod support;

use momentcard_core::certify::{solve_relaxation, CertifyConfig};
use momentcard_core::moment::moments_of_atoms;
use momentcard_core::oracle::rounded_bound;
use momentcard_core::relaxation::{
    build_moment_relaxation, min_card_point, min_card_program, min_rank_point, min_rank_program, sos_feasibility,
    validate_envelope, envelope_program, EnvelopeOptions,
};
use momentcard_core::poly::Polynomial;
use momentcard_core::sdp::{SolveStatus, SolverConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use support::{card, planted};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feasible_points_give_feasible_moments(seed in any::<u64>(), n in 1usize..4, order in 1usize..3) {
        let inst = planted(n, 2, seed);
        let sap = min_card_program(&inst.a, &inst.b, 2.0 * n as f64 + 1.0).unwrap();
        let pt = min_card_point(&inst.x);
        prop_assert!(sap.check_point(&pt).unwrap().feasible(1e-12));
        let relax = build_moment_relaxation(&sap, order).unwrap();
        let y = moments_of_atoms(&[pt], &[1.0], 2 * order, true).unwrap();
        let check = relax.check_moments(&y).unwrap();
        prop_assert!(check.feasible(1e-9), "{:?}", check);
        prop_assert_eq!(relax.objective_value(&y), card(&inst.x, 0.0) as f64);
    }

    #[test]
    fn rank_points_satisfy_the_rank_program(entries in prop::collection::vec(-1.0f64..1.0, 6), r in 1usize..=3) {
        let g = DMatrix::from_column_slice(3, 2, &entries);
        let x = if r == 3 { &g * g.transpose() + DMatrix::identity(3, 3) * 0.1 } else { g.columns(0, r) * g.columns(0, r).transpose() };
        let a = vec![DMatrix::identity(3, 3)];
        let b = vec![x.trace()];
        let pt = min_rank_point(&x, &[0.0; 3], 1e-9).unwrap();
        let alpha = 2.0 * (1.0 + pt.iter().map(|v| v * v).sum::<f64>());
        let sap = min_rank_program(&a, &b, alpha).unwrap();
        let check = sap.check_point(&pt).unwrap();
        prop_assert!(check.feasible(1e-9), "{:?}", check);
        prop_assert_eq!(check.objective.round() as usize, x.rank(1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dropping_a_constraint_never_raises_the_bound(seed in any::<u64>(), k in 0usize..6) {
        let inst = planted(2, 2, seed);
        let sap = min_card_program(&inst.a, &inst.b, 5.0).unwrap();
        let cfg = CertifyConfig::default();
        let full = solve_relaxation(&sap, 2, &cfg).unwrap();
        let k = k % sap.constraints().len();
        let loose = solve_relaxation(&sap.drop_constraint(k).unwrap(), 2, &cfg).unwrap();
        // bounds of unattained programs are only accurate to a few 1e-3 from below
        prop_assert!(loose.lower_bound <= full.lower_bound + 5e-3, "{} > {}", loose.lower_bound, full.lower_bound);
        prop_assert!(rounded_bound(loose.lower_bound) <= rounded_bound(full.lower_bound));
        prop_assert!(full.lower_bound <= card(&inst.x, 0.0) as f64 + 1e-5);
    }
}

#[test]
fn sos_feasibility_recognizes_squares() {
    let x = Polynomial::var(2, 0);
    let y = Polynomial::var(2, 1);
    let one = Polynomial::constant(2, 1.0);
    let p = &(&(&x * &y) - &one).pow(2) + &(&x - &y).pow(2);
    let cfg = SolverConfig::default();
    let gram = sos_feasibility(&p, &cfg).unwrap();
    let q = gram.gram.symmetric_eigenvalues().min();
    assert!(q >= -1e-7, "{q}");
    // negative at the origin
    let bad = &(&x * &y).pow(2) - &one;
    assert!(sos_feasibility(&bad, &cfg).map(|g| g.status != SolveStatus::Optimal).unwrap_or(true));
}

#[test]
fn envelope_validation_off_the_origin() {
    // x₁ + x₂ ≥ 1/2 inside the unit box
    let a = vec![vec![1.0, 1.0]];
    let b = vec![0.5];
    let fit = envelope_program(&a, &b, 2, 2, &EnvelopeOptions::default()).unwrap().fit(&SolverConfig::default()).unwrap();
    assert_eq!(fit.status, SolveStatus::Optimal);
    let v = validate_envelope(&fit.p, &a, &b, 500, 7).unwrap();
    assert_eq!(v.samples, 500);
    assert!(v.max_excess <= 1e-6, "{v:?}");
    assert!(v.min_hessian_eigenvalue >= -1e-6, "{v:?}");
    assert!(fit.p.eval(&[0.5, 0.0]).unwrap() <= 1.0 + 1e-6);
}
