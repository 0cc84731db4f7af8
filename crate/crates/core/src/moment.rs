//! Moment vectors and the index layouts of moment and localizing matrices.
//!
//! Moments are indexed by position in the graded-lex basis. Because a basis of
//! degree `m` is a prefix of every basis of higher degree, a layout built for
//! one order stays valid for any moment vector of larger order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::{basis, basis_size, Monomial, MonomialBasis, Polynomial};
use crate::{Error, Result};

/// Moments `y_α` for all `|α| ≤ order`, in graded-lex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub n: usize,
    pub order: usize,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn new(n: usize, order: usize, values: Vec<f64>) -> Result<Self> {
        let want = basis_size(n, order);
        if values.len() != want {
            return Err(Error::Dimension(format!("{} moments given, order {order} in {n} variables needs {want}", values.len())));
        }
        Ok(MomentVector { n, order, values })
    }

    pub fn zeros(n: usize, order: usize) -> Self {
        MomentVector { n, order, values: vec![0.0; basis_size(n, order)] }
    }

    /// `Σ_α p_α y_α`.
    pub fn integrate(&self, p: &Polynomial<f64>) -> Result<f64> {
        if p.nvars() != self.n {
            return Err(Error::Dimension(format!("polynomial in {} variables, moments in {}", p.nvars(), self.n)));
        }
        if p.degree() as usize > self.order {
            return Err(Error::DegreeOverflow {
                what: "integration".into(),
                order: self.order,
                needed: p.degree() as usize,
            });
        }
        let b = basis(self.n, self.order)?;
        Ok(p.terms().map(|(m, c)| c * self.values[b.index_of(m).unwrap()]).sum())
    }
}

/// Symmetric matrix whose entries are linear functionals of a moment vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLayout {
    n: usize,
    side: usize,
    /// Row-major `side × side` cells of `(moment index, coefficient)` terms.
    cells: Vec<Vec<(usize, f64)>>,
    /// Smallest moment order the layout can be assembled from.
    required_order: usize,
}

impl MatrixLayout {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn required_order(&self) -> usize {
        self.required_order
    }

    pub fn cell(&self, i: usize, j: usize) -> &[(usize, f64)] {
        &self.cells[i * self.side + j]
    }

    /// Value of one entry at the given moments.
    pub fn entry(&self, values: &[f64], i: usize, j: usize) -> f64 {
        self.cell(i, j).iter().map(|&(k, c)| c * values[k]).sum()
    }

    /// Leading principal `side × side` block.
    pub fn truncate(&self, side: usize) -> MatrixLayout {
        let side = side.min(self.side);
        let mut cells = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                cells.push(self.cell(i, j).to_vec());
            }
        }
        let required_order = required_order(self.n, &cells);
        MatrixLayout { n: self.n, side, cells, required_order }
    }
}

fn required_order(n: usize, cells: &[Vec<(usize, f64)>]) -> usize {
    let Some(max_index) = cells.iter().flatten().map(|&(k, _)| k).max() else { return 0 };
    (0..).find(|&o| basis_size(n, o) > max_index).unwrap()
}

fn index_in(b: &MonomialBasis, m: &Monomial) -> usize {
    b.index_of(m).expect("monomial within basis degree")
}

/// `M_d(y)`: entry `(i, j)` is `y_{β(i)+β(j)}` over `basis(n, d)`.
pub fn moment_layout(n: usize, d: usize) -> Result<MatrixLayout> {
    localizing_layout(&Polynomial::constant(n, 1.0), n, d)
}

/// `M_d(g y)`: entry `(i, j)` is `Σ_α g_α y_{β(i)+β(j)+α}`.
pub fn localizing_layout(g: &Polynomial<f64>, n: usize, d: usize) -> Result<MatrixLayout> {
    if g.nvars() != n {
        return Err(Error::Dimension(format!("polynomial in {} variables for a layout in {n}", g.nvars())));
    }
    let rows = basis(n, d)?;
    let order = 2 * d + g.degree() as usize;
    let full = basis(n, order)?;
    let side = rows.len();
    let mut cells = vec![Vec::new(); side * side];
    for i in 0..side {
        for j in i..side {
            let bij = rows.get(i).times(rows.get(j));
            let mut cell: Vec<(usize, f64)> = g.terms().map(|(a, &c)| (index_in(&full, &bij.times(a)), c)).collect();
            cell.sort_by_key(|&(k, _)| k);
            cells[j * side + i] = cell.clone();
            cells[i * side + j] = cell;
        }
    }
    let required_order = if g.is_zero() { 0 } else { order };
    Ok(MatrixLayout { n, side, cells, required_order })
}

pub fn assemble(y: &MomentVector, layout: &MatrixLayout) -> Result<DMatrix<f64>> {
    if y.order < layout.required_order {
        return Err(Error::DegreeOverflow {
            what: "layout assembly".into(),
            order: y.order,
            needed: layout.required_order,
        });
    }
    assemble_values(&y.values, layout)
}

/// Assembly from a bare slice of moments in graded-lex order.
pub fn assemble_values(values: &[f64], layout: &MatrixLayout) -> Result<DMatrix<f64>> {
    let s = layout.side;
    if let Some(&(k, _)) = layout.cells.iter().flatten().find(|&&(k, _)| k >= values.len()) {
        return Err(Error::Dimension(format!("moment index {k} out of range for {} moments", values.len())));
    }
    Ok(DMatrix::from_fn(s, s, |i, j| layout.entry(values, i, j)))
}

/// Moments of `Σ_k w_k δ_{x_k}` up to the given order.
///
/// With `probability` set the weights must sum to one.
pub fn moments_of_atoms(points: &[Vec<f64>], weights: &[f64], order: usize, probability: bool) -> Result<MomentVector> {
    if points.len() != weights.len() {
        return Err(Error::Dimension(format!("{} atoms with {} weights", points.len(), weights.len())));
    }
    let Some(n) = points.first().map(Vec::len) else {
        return Err(Error::InvalidArgument("no atoms".into()));
    };
    if points.iter().any(|p| p.len() != n) {
        return Err(Error::Dimension("atoms of different dimensions".into()));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    if probability && (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("probability weights must sum to one".into()));
    }
    let b = basis(n, order)?;
    let values = b
        .entries()
        .iter()
        .map(|m| points.iter().zip(weights).map(|(x, &w)| w * m.eval(x)).sum())
        .collect();
    Ok(MomentVector { n, order, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn univariate_hankel() {
        let l = moment_layout(1, 1).unwrap();
        assert_eq!(l.side(), 2);
        assert_eq!(l.cell(0, 0), &[(0, 1.0)]);
        assert_eq!(l.cell(0, 1), &[(1, 1.0)]);
        assert_eq!(l.cell(1, 1), &[(2, 1.0)]);
        assert_eq!(l.required_order(), 2);
    }

    #[test]
    fn bivariate_moment_layout() {
        let l = moment_layout(2, 1).unwrap();
        let b = basis(2, 2).unwrap();
        // rows (1, x1, x2); entry (x1, x2) is x1x2
        assert_eq!(l.cell(1, 2), &[(b.index_of(&Monomial::new(vec![1, 1])).unwrap(), 1.0)]);
        for i in 0..3 {
            assert_eq!(l.cell(0, i), &[(i, 1.0)]);
            let twice = b.get(i).times(b.get(i));
            assert_eq!(l.cell(i, i), &[(b.index_of(&twice).unwrap(), 1.0)]);
        }
    }

    #[test]
    fn localizing_examples() {
        let one = localizing_layout(&Polynomial::constant(2, 1.0), 2, 2).unwrap();
        assert_eq!(one, moment_layout(2, 2).unwrap());

        // g = 1 − x² at d = 1: entry (0, 0) is y0 − y2
        let x = Polynomial::<f64>::var(1, 0);
        let g = &Polynomial::constant(1, 1.0) - &(&x * &x);
        let l = localizing_layout(&g, 1, 1).unwrap();
        assert_eq!(l.cell(0, 0), &[(0, 1.0), (2, -1.0)]);

        // g = a1 x1 + a2 x2 − b
        let g = Polynomial::from_terms(
            2,
            [(Monomial::new(vec![1, 0]), 2.0), (Monomial::new(vec![0, 1]), 3.0), (Monomial::new(vec![0, 0]), -5.0)],
        )
        .unwrap();
        let l = localizing_layout(&g, 2, 1).unwrap();
        assert_eq!(l.cell(0, 0), &[(0, -5.0), (1, 2.0), (2, 3.0)]);
    }

    #[test]
    fn assembly_examples() {
        let l = moment_layout(1, 1).unwrap();
        let dirac = moments_of_atoms(&[vec![2.0]], &[1.0], 2, true).unwrap();
        let m = assemble(&dirac, &l).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));

        let two = moments_of_atoms(&[vec![0.0], vec![1.0]], &[0.5, 0.5], 2, true).unwrap();
        assert_eq!(two.values, vec![1.0, 0.5, 0.5]);
        let m = assemble(&two, &l).unwrap();
        assert!(m.symmetric_eigenvalues().min() > 0.0);

        let zero = MomentVector::zeros(1, 2);
        assert_eq!(assemble(&zero, &l).unwrap(), DMatrix::zeros(2, 2));

        let sym = moments_of_atoms(&[vec![1.0], vec![-1.0]], &[0.5, 0.5], 2, true).unwrap();
        assert_eq!(sym.values, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn assembly_rejects_short_vectors() {
        let l = moment_layout(1, 2).unwrap();
        let y = MomentVector::zeros(1, 2);
        assert!(matches!(assemble(&y, &l), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn atom_argument_checks() {
        assert!(moments_of_atoms(&[vec![1.0]], &[0.5], 2, true).is_err());
        assert!(moments_of_atoms(&[vec![1.0]], &[0.5], 2, false).is_ok());
        assert!(moments_of_atoms(&[vec![1.0]], &[-1.0], 2, false).is_err());
        assert!(moments_of_atoms(&[vec![1.0], vec![1.0, 2.0]], &[0.5, 0.5], 2, true).is_err());
        assert!(MomentVector::new(2, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn integrate_polynomial() {
        let y = moments_of_atoms(&[vec![2.0, 3.0]], &[1.0], 3, true).unwrap();
        let p = Polynomial::from_terms(2, [(Monomial::new(vec![2, 1]), 1.0), (Monomial::new(vec![0, 0]), 1.0)]).unwrap();
        assert_eq!(y.integrate(&p).unwrap(), 13.0);
    }

    #[test]
    fn truncation_is_leading_block() {
        let big = moment_layout(2, 2).unwrap();
        assert_eq!(big.truncate(3), moment_layout(2, 1).unwrap());
    }
}
