//! Rank analysis of relaxation solutions, point extraction and SOS decompositions.

use momentcard_sdp::{SolveStatus, SolverConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::moment::MomentVector;
use crate::poly::{basis_size, Monomial, Polynomial};
use crate::relaxation::{
    build_moment_relaxation, solve_relaxation_sdp, solve_variant, RelaxationSdp, RelaxationSolve, SemialgebraicProgram,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CertifyConfig {
    pub solver: SolverConfig,
    /// Relative singular-value threshold for numerical rank.
    pub rank_tol: f64,
    /// Largest bound change between consecutive orders still counted as stable.
    pub bound_tol: f64,
    /// Constraint and objective tolerance for extracted points.
    pub point_tol: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig { solver: SolverConfig::default(), rank_tol: 1e-6, bound_tol: 1e-6, point_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranks {
    /// Rank of `M_N(y)`.
    pub moment: usize,
    /// Rank of the leading degree-`(N−1)` block of `M_N(y)`.
    pub truncated: usize,
    /// Rank of each localizing matrix, in constraint order.
    pub localizing: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationResult {
    pub order: usize,
    /// `l_N`; the smaller of the two sides when the solve did not converge.
    pub lower_bound: f64,
    pub moment_value: f64,
    pub sos_value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub moments: MomentVector,
    pub ranks: Ranks,
    pub certified: bool,
    pub extracted_point: Option<Vec<f64>>,
    /// Gram trace bound of the solve the result comes from, if any.
    pub trace_bound: Option<f64>,
}

/// Number of singular values above `tol · max(1, σ_max)`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().symmetric_eigenvalues().map(f64::abs);
    let cut = tol * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Ranks of the moment and localizing matrices of `y` under a relaxation's layouts.
pub fn moment_ranks(relax: &RelaxationSdp, y: &MomentVector, rank_tol: f64) -> Result<Ranks> {
    let m = relax.block_matrix(y, 0)?;
    let side = basis_size(relax.nvars, relax.order - 1);
    let truncated = m.view((0, 0), (side, side)).into_owned();
    let localizing = (1..relax.layouts.len())
        .map(|k| relax.block_matrix(y, k).map(|l| numerical_rank(&l, rank_tol)))
        .collect::<Result<_>>()?;
    Ok(Ranks { moment: numerical_rank(&m, rank_tol), truncated: numerical_rank(&truncated, rank_tol), localizing })
}

/// Builds a result from a moment vector and its bound; `certified` starts false.
pub fn analyze(relax: &RelaxationSdp, y: MomentVector, lower_bound: f64, rank_tol: f64) -> Result<RelaxationResult> {
    let ranks = moment_ranks(relax, &y, rank_tol)?;
    Ok(RelaxationResult {
        order: relax.order,
        lower_bound,
        moment_value: lower_bound,
        sos_value: lower_bound,
        status: SolveStatus::Optimal,
        iterations: 0,
        moments: y,
        ranks,
        certified: false,
        extracted_point: None,
        trace_bound: None,
    })
}

/// Builds and solves the order-`N` relaxation.
pub fn solve_relaxation(sap: &SemialgebraicProgram, order: usize, cfg: &CertifyConfig) -> Result<RelaxationResult> {
    let relax = build_moment_relaxation(sap, order)?;
    solve_built(&relax, cfg)
}

/// Trace bounds tried when the plain solve stalls.
pub const TRACE_BOUNDS: [f64; 4] = [1e3, 1e4, 1e5, 1e6];

/// Solves the relaxation. A solve that stalls is repeated with the Gram traces
/// bounded by increasing [`TRACE_BOUNDS`] until a bounded solve fails after one
/// has converged; the converged solve with the largest `min(moment, SOS)` is reported. With no converged solve at all the smaller
/// of the two sides of the plain solve is reported.
pub fn solve_built(relax: &RelaxationSdp, cfg: &CertifyConfig) -> Result<RelaxationResult> {
    let plain = solve_relaxation_sdp(relax, &cfg.solver)?;
    if matches!(plain.solution.status, SolveStatus::Optimal | SolveStatus::InfeasibleSuspected) {
        return result_from(relax, plain, None, cfg);
    }
    let mut best: Option<(RelaxationSolve, f64)> = None;
    for &bound in &TRACE_BOUNDS {
        let s = solve_variant(relax, &relax.with_trace_bound(bound), &cfg.solver)?;
        if s.solution.status != SolveStatus::Optimal {
            if best.is_some() {
                break;
            }
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| s.moment_value.min(s.sos_value) > b.moment_value.min(b.sos_value)) {
            best = Some((s, bound));
        }
    }
    match best {
        Some((s, bound)) => result_from(relax, s, Some(bound), cfg),
        None => result_from(relax, plain, None, cfg),
    }
}

fn result_from(relax: &RelaxationSdp, r: RelaxationSolve, trace_bound: Option<f64>, cfg: &CertifyConfig) -> Result<RelaxationResult> {
    let bound = match (r.solution.status, trace_bound) {
        (SolveStatus::Optimal, None) => r.moment_value,
        _ => r.moment_value.min(r.sos_value),
    };
    let mut out = analyze(relax, r.moments, bound, cfg.rank_tol)?;
    out.moment_value = r.moment_value;
    out.sos_value = r.sos_value;
    out.status = r.solution.status;
    out.iterations = r.solution.iterations;
    out.trace_bound = trace_bound;
    Ok(out)
}

/// Flatness of `M_N(y)` over its degree-`(N−1)` truncation and a stable bound.
pub fn stabilization_check(prev: &RelaxationResult, cur: &RelaxationResult, bound_tol: f64) -> Result<bool> {
    if cur.order != prev.order + 1 {
        return Err(Error::OrderMismatch(format!("orders {} and {} are not consecutive", prev.order, cur.order)));
    }
    if prev.moments.n != cur.moments.n {
        return Err(Error::OrderMismatch("results of different programs".into()));
    }
    let flat = cur.ranks.moment == cur.ranks.truncated;
    Ok(flat && (cur.lower_bound - prev.lower_bound).abs() < bound_tol)
}

/// Reads `x_i = y_{e_i} / y_0` off a rank-one moment matrix.
pub fn extract_point(result: &RelaxationResult) -> Result<Vec<f64>> {
    if result.ranks.moment != 1 {
        return Err(Error::ExtractionUnavailable { rank: result.ranks.moment });
    }
    let y = &result.moments.values;
    let y0 = y[0];
    if y0.abs() < 1e-12 {
        return Err(Error::ExtractionUnavailable { rank: result.ranks.moment });
    }
    // graded-lex: 1, x1, ..., xn
    Ok((1..=result.moments.n).map(|i| y[i] / y0).collect())
}

/// Checks a point against every constraint and the bound it should attain.
pub fn verify_point(sap: &SemialgebraicProgram, point: &[f64], bound: f64, tol: f64) -> Result<()> {
    let c = sap.check_point(point)?;
    if !c.feasible(tol) {
        return Err(Error::Verification(format!(
            "constraint violation (min inequality {:.3e}, max equality {:.3e})",
            c.min_inequality, c.max_equality
        )));
    }
    if (c.objective - bound).abs() > tol * (1.0 + bound.abs()) {
        return Err(Error::Verification(format!("objective {} differs from bound {bound}", c.objective)));
    }
    Ok(())
}

/// Applies the stabilization test to consecutive results and extracts a point when the
/// moment matrix has rank one. A point that fails re-substitution clears `certified`.
pub fn certify_pair(sap: &SemialgebraicProgram, prev: &RelaxationResult, cur: &mut RelaxationResult, cfg: &CertifyConfig) -> Result<()> {
    cur.certified = cur.status == SolveStatus::Optimal && stabilization_check(prev, cur, cfg.bound_tol)?;
    cur.extracted_point = None;
    if cur.ranks.moment == 1 {
        let point = extract_point(cur)?;
        match verify_point(sap, &point, cur.lower_bound, cfg.point_tol) {
            Ok(()) => cur.extracted_point = Some(point),
            Err(_) => cur.certified = false,
        }
    }
    Ok(())
}

/// Summary written by the `certify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub order: usize,
    pub bound: f64,
    pub rounded_bound: i64,
    pub ranks: Ranks,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

impl Certificate {
    pub fn from_result(r: &RelaxationResult) -> Self {
        Certificate {
            order: r.order,
            bound: r.lower_bound,
            rounded_bound: crate::oracle::rounded_bound(r.lower_bound),
            ranks: r.ranks.clone(),
            certified: r.certified,
            point: r.extracted_point.clone(),
        }
    }
}

/// Solves orders `N` and `N + 1` and certifies the latter.
pub fn certify(sap: &SemialgebraicProgram, order: usize, cfg: &CertifyConfig) -> Result<(RelaxationResult, RelaxationResult)> {
    let prev = solve_relaxation(sap, order, cfg)?;
    let mut cur = solve_relaxation(sap, order + 1, cfg)?;
    certify_pair(sap, &prev, &mut cur, cfg)?;
    Ok((prev, cur))
}

/// Splits `zᵀ G z` into squares `Σ (√λᵢ vᵢᵀ z)²` from the eigenvectors of `G`.
pub fn sos_decompose(gram: &DMatrix<f64>, monomials: &[Monomial]) -> Result<Vec<Polynomial>> {
    let s = monomials.len();
    if gram.nrows() != s || gram.ncols() != s {
        return Err(Error::Dimension(format!("{}x{} Gram matrix for {s} monomials", gram.nrows(), gram.ncols())));
    }
    if s == 0 {
        return Ok(Vec::new());
    }
    let n = monomials[0].nvars();
    let sym = (gram + gram.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let floor = -1e-8 * top.max(1.0);
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < floor) {
        return Err(Error::Decomposition(format!("Gram matrix has eigenvalue {bad:.3e}")));
    }
    let mut out = Vec::new();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let r = l.sqrt();
        let h = Polynomial::from_terms(n, monomials.iter().enumerate().map(|(i, m)| (m.clone(), r * eig.eigenvectors[(i, k)])))?;
        if !h.is_zero() {
            out.push(h);
        }
    }
    Ok(out)
}

/// `zᵀ G z` as a polynomial.
pub fn gram_polynomial(gram: &DMatrix<f64>, monomials: &[Monomial]) -> Result<Polynomial> {
    let Some(n) = monomials.first().map(Monomial::nvars) else { return Ok(Polynomial::zero(0)) };
    let mut terms = Vec::new();
    for (i, a) in monomials.iter().enumerate() {
        for (j, b) in monomials.iter().enumerate() {
            terms.push((a.times(b), gram[(i, j)]));
        }
    }
    Polynomial::from_terms(n, terms)
}

/// Weak duality between the SOS and moment sides: `sos ≤ moment + tol`.
pub fn duality_check(moment_value: f64, sos_value: f64, tol: f64) -> bool {
    sos_value <= moment_value + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::moments_of_atoms;
    use crate::relaxation::{min_card_point, min_card_program};

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::identity(3, 3), 1e-8), 3);
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), 1e-8), 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-8), 0);
    }

    fn dirac_result(sap: &SemialgebraicProgram, order: usize, point: &[f64], bound: f64) -> RelaxationResult {
        let relax = build_moment_relaxation(sap, order).unwrap();
        let y = moments_of_atoms(&[point.to_vec()], &[1.0], 2 * order, true).unwrap();
        analyze(&relax, y, bound, 1e-6).unwrap()
    }

    #[test]
    fn dirac_moments_stabilize() {
        let sap = min_card_program(&[vec![1.0]], &[1.0], 4.0).unwrap();
        let p = min_card_point(&[1.0]);
        let prev = dirac_result(&sap, 1, &p, 1.0);
        let cur = dirac_result(&sap, 2, &p, 1.0);
        assert_eq!(cur.ranks.moment, 1);
        assert_eq!(cur.ranks.truncated, 1);
        assert!(stabilization_check(&prev, &cur, 1e-6).unwrap());
        assert!(stabilization_check(&cur, &prev, 1e-6).is_err());
        let mut jumped = cur.clone();
        jumped.lower_bound += 0.3;
        assert!(!stabilization_check(&prev, &jumped, 1e-6).unwrap());
    }

    #[test]
    fn extraction() {
        let sap = min_card_program(&[vec![1.0, 0.0]], &[0.5], 4.0).unwrap();
        let p = min_card_point(&[0.5, 0.0]);
        let r = dirac_result(&sap, 2, &p, 1.0);
        let x = extract_point(&r).unwrap();
        assert_eq!(&x[..2], &[0.5, 0.0]);
        assert!(verify_point(&sap, &x, 1.0, 1e-9).is_ok());
        assert!(verify_point(&sap, &x, 2.0, 1e-9).is_err());

        let relax = build_moment_relaxation(&sap, 2).unwrap();
        let two = moments_of_atoms(&[p.clone(), min_card_point(&[1.0, 0.0])], &[0.5, 0.5], 4, true).unwrap();
        let r2 = analyze(&relax, two, 1.0, 1e-6).unwrap();
        assert!(matches!(extract_point(&r2), Err(Error::ExtractionUnavailable { rank: 2 })));
    }

    #[test]
    fn decomposition_examples() {
        let mons = vec![Monomial::new(vec![0]), Monomial::new(vec![1])];
        let hs = sos_decompose(&DMatrix::identity(2, 2), &mons).unwrap();
        assert_eq!(hs.len(), 2);
        let total = hs.iter().fold(Polynomial::zero(1), |acc, h| &acc + &(h * h));
        let want = Polynomial::from_terms(1, [(Monomial::new(vec![0]), 1.0), (Monomial::new(vec![2]), 1.0)]).unwrap();
        for (m, c) in want.terms() {
            assert!((total.coef(m) - c).abs() < 1e-12);
        }
        assert!(sos_decompose(&DMatrix::zeros(2, 2), &mons).unwrap().is_empty());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(sos_decompose(&indefinite, &mons), Err(Error::Decomposition(_))));
    }

    #[test]
    fn duality_examples() {
        assert!(duality_check(1.0, 1.0, 1e-6));
        assert!(duality_check(1.0, 0.9, 1e-6));
        assert!(!duality_check(1.0, 1.1, 1e-6));
    }
}
