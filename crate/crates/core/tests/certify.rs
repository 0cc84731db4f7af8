mod support;

use momentcard_core::certify::{
    certify, duality_check, gram_polynomial, numerical_rank, solve_relaxation, sos_decompose, Certificate, CertifyConfig,
};
use momentcard_core::oracle::{brute_force_card, rounded_bound};
use momentcard_core::poly::{basis, Polynomial};
use momentcard_core::relaxation::min_card_program;
use momentcard_core::sdp::{SolveStatus, SolverConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use support::planted;

fn factor(n: usize, rank: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * rank).prop_map(move |v| DMatrix::from_vec(n, rank, v))
}

fn max_coef_diff(p: &Polynomial, q: &Polynomial) -> f64 {
    (p - q).terms().fold(0.0, |a, (_, c)| a.max(c.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sos_decomposition_reconstructs_the_gram_form(f in (1usize..=6).prop_flat_map(|r| factor(6, r))) {
        let monomials = basis(2, 2).unwrap().entries().to_vec();
        let gram = &f * f.transpose();
        let squares = sos_decompose(&gram, &monomials).unwrap();
        prop_assert!(squares.len() <= monomials.len());
        let sum = squares.iter().fold(Polynomial::zero(2), |acc, q| &acc + &(q * q));
        let want = gram_polynomial(&gram, &monomials).unwrap();
        prop_assert!(max_coef_diff(&sum, &want) <= 1e-8, "{}", max_coef_diff(&sum, &want));
        prop_assert_eq!(numerical_rank(&gram, 1e-9), f.rank(1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rounded_bounds_never_exceed_the_optimum(seed in any::<u64>(), n in 1usize..=2) {
        let inst = planted(n, 2, seed);
        let sap = min_card_program(&inst.a, &inst.b, 2.0 * n as f64 + 1.0).unwrap();
        let optimum = brute_force_card(&inst.a, &inst.b, &SolverConfig::default()).unwrap().optimum as i64;
        let mut prev = f64::NEG_INFINITY;
        for order in 1..=2 {
            let r = solve_relaxation(&sap, order, &CertifyConfig::default()).unwrap();
            prop_assert!(rounded_bound(r.lower_bound) <= optimum, "order {}: {} vs {}", order, r.lower_bound, optimum);
            prop_assert!(r.lower_bound >= prev - 1e-6);
            prop_assert!(duality_check(r.moment_value, r.sos_value, 1e-6) || r.status != SolveStatus::Optimal);
            prev = r.lower_bound;
        }
    }
}

#[test]
fn single_variable_instance_is_certified() {
    // x ≥ 1 forces Card = 1
    let sap = min_card_program(&[vec![1.0]], &[1.0], 5.0).unwrap();
    let (prev, cur) = certify(&sap, 2, &CertifyConfig::default()).unwrap();
    assert_eq!(rounded_bound(prev.lower_bound), 1);
    assert_eq!(rounded_bound(cur.lower_bound), 1);
    assert!(cur.lower_bound <= 1.0 + 1e-6);
    let cert = Certificate::from_result(&cur);
    assert_eq!(cert.rounded_bound, 1);
    if let Some(point) = &cert.point {
        assert!(point[0] >= 1.0 - 1e-5);
        assert!((point[1] - 1.0).abs() <= 1e-5);
    }
    let json = serde_json::to_string(&cert).unwrap();
    assert!(json.contains("\"rounded_bound\":1"));
}

#[test]
fn indefinite_gram_matrices_are_rejected() {
    let monomials = basis(1, 1).unwrap().entries().to_vec();
    let gram = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(sos_decompose(&gram, &monomials).is_err());
    assert!(sos_decompose(&DMatrix::identity(3, 3), &monomials).is_err());
}
