use momentcard_core::moment::{assemble, localizing_layout, moment_layout, moments_of_atoms};
use momentcard_core::poly::{basis, Monomial, Polynomial};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn atoms(n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..5).prop_flat_map(move |k| {
        (prop::collection::vec(prop::collection::vec(-1.5f64..1.5, n), k), prop::collection::vec(0.05f64..1.0, k))
    })
}

fn quadratic(n: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(-2.0f64..2.0, 1 + n + n).prop_map(move |c| {
        let mut g = Polynomial::constant(n, c[0]);
        for i in 0..n {
            g.add_term(Monomial::var(n, i), c[1 + i]);
            g.add_term(Monomial::var(n, i).times(&Monomial::var(n, i)), c[1 + n + i]);
        }
        g
    })
}

/// `Σ_k w_k g(x_k) z(x_k) z(x_k)ᵀ` over the degree-`d` monomials `z`.
fn direct_localizing(points: &[Vec<f64>], weights: &[f64], g: &Polynomial, d: usize) -> DMatrix<f64> {
    let n = points[0].len();
    let b = basis(n, d).unwrap();
    let mut out = DMatrix::zeros(b.len(), b.len());
    for (x, &w) in points.iter().zip(weights) {
        let z = DVector::from_iterator(b.len(), b.entries().iter().map(|m| m.eval(x)));
        out += &z * z.transpose() * (w * g.eval(x).unwrap());
    }
    out
}

proptest! {
    #[test]
    fn atomic_moment_matrices_are_psd((points, weights) in atoms(2), d in 1usize..4) {
        let y = moments_of_atoms(&points, &weights, 2 * d, false).unwrap();
        let m = assemble(&y, &moment_layout(2, d).unwrap()).unwrap();
        let scale = m.amax().max(1.0);
        prop_assert!(m.symmetric_eigenvalues().min() >= -1e-10 * scale);
        let direct = direct_localizing(&points, &weights, &Polynomial::constant(2, 1.0), d);
        prop_assert!((m - direct).amax() <= 1e-10 * scale);
    }

    #[test]
    fn localizing_matrices_integrate_g((points, weights) in atoms(3), g in quadratic(3), d in 0usize..3) {
        let y = moments_of_atoms(&points, &weights, 2 * d + 2, false).unwrap();
        let got = assemble(&y, &localizing_layout(&g, 3, d).unwrap()).unwrap();
        let want = direct_localizing(&points, &weights, &g, d);
        prop_assert!((&got - &want).amax() <= 1e-9 * (1.0 + want.amax()));
        // the (0, 0) entry is the integral of g
        let integral: f64 = points.iter().zip(&weights).map(|(x, w)| w * g.eval(x).unwrap()).sum();
        prop_assert!((y.integrate(&g).unwrap() - integral).abs() <= 1e-9 * (1.0 + integral.abs()));
        prop_assert!((got[(0, 0)] - integral).abs() <= 1e-9 * (1.0 + integral.abs()));
    }
}

#[test]
fn nonnegative_localizer_is_psd_on_its_support() {
    // g = 1 - x² is nonnegative on atoms inside [-1, 1]
    let g = &Polynomial::constant(1, 1.0) - &Polynomial::var(1, 0).pow(2);
    let points = vec![vec![-0.9], vec![0.1], vec![0.7]];
    let y = moments_of_atoms(&points, &[0.2, 0.5, 0.3], 6, true).unwrap();
    let l = assemble(&y, &localizing_layout(&g, 1, 2).unwrap()).unwrap();
    assert!(l.symmetric_eigenvalues().min() >= -1e-12);
}

#[test]
fn short_moment_vectors_are_rejected() {
    let y = moments_of_atoms(&[vec![0.5, 0.5]], &[1.0], 2, true).unwrap();
    assert!(assemble(&y, &moment_layout(2, 2).unwrap()).is_err());
    assert!(moments_of_atoms(&[vec![0.5]], &[0.7], 2, true).is_err());
}
