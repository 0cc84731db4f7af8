//! Linear programs routed through the SDP solver as a single diagonal block.

use serde::{Deserialize, Serialize};

use crate::problem::{Block, LinearFunctional, SdpProblem};
use crate::solver::{solve, SolveStatus, SolverConfig};
use crate::SdpError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bounds {
    pub const FREE: Bounds = Bounds { lower: None, upper: None };
    pub const NONNEG: Bounds = Bounds { lower: Some(0.0), upper: None };

    pub fn between(lower: f64, upper: f64) -> Self {
        Bounds { lower: Some(lower), upper: Some(upper) }
    }
}

/// `minimize c'x  s.t.  A_eq x = b_eq,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

enum VarMap {
    Free(usize),
    /// x = offset + sign * d[pos]
    Shifted { pos: usize, offset: f64, sign: f64 },
}

pub fn solve_lp(lp: &LpProblem, cfg: &SolverConfig) -> Result<LpSolution, SdpError> {
    let n = lp.c.len();
    if lp.bounds.len() != n {
        return Err(SdpError::Dimension(format!("{} bounds for {} variables", lp.bounds.len(), n)));
    }
    if lp.a_eq.len() != lp.b_eq.len() {
        return Err(SdpError::Dimension(format!(
            "{} constraint rows but {} right-hand sides",
            lp.a_eq.len(),
            lp.b_eq.len()
        )));
    }
    if let Some(row) = lp.a_eq.iter().find(|r| r.len() != n) {
        return Err(SdpError::Dimension(format!("constraint row of length {} for {} variables", row.len(), n)));
    }

    let mut maps = Vec::with_capacity(n);
    let mut diag = 0;
    let mut nfree = 0;
    // Upper-bound rows d_lo + d_hi = u − l for doubly bounded variables.
    let mut box_rows = Vec::new();
    for bnd in &lp.bounds {
        match (bnd.lower, bnd.upper) {
            (None, None) => {
                maps.push(VarMap::Free(nfree));
                nfree += 1;
            }
            (Some(l), None) => {
                maps.push(VarMap::Shifted { pos: diag, offset: l, sign: 1.0 });
                diag += 1;
            }
            (None, Some(u)) => {
                maps.push(VarMap::Shifted { pos: diag, offset: u, sign: -1.0 });
                diag += 1;
            }
            (Some(l), Some(u)) => {
                maps.push(VarMap::Shifted { pos: diag, offset: l, sign: 1.0 });
                box_rows.push((diag, diag + 1, u - l));
                diag += 2;
            }
        }
    }

    let mut p = SdpProblem::new();
    let blk = if diag > 0 { Some(p.add_block(Block::diagonal(diag))) } else { None };
    p.add_free_vars(nfree);
    let mut constant = 0.0;
    let lower = |coefs: &[f64], f: &mut LinearFunctional| -> f64 {
        let mut shift = 0.0;
        for (j, &a) in coefs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Free(k) => f.add_free(k, a),
                VarMap::Shifted { pos, offset, sign } => {
                    f.add_entry(blk.unwrap(), pos, pos, sign * a);
                    shift += a * offset;
                }
            }
        }
        shift
    };
    let mut obj = LinearFunctional::new();
    constant += lower(&lp.c, &mut obj);
    p.objective = obj;
    for (row, &rhs) in lp.a_eq.iter().zip(&lp.b_eq) {
        let mut f = LinearFunctional::new();
        let shift = lower(row, &mut f);
        p.add_equality(f, rhs - shift);
    }
    for &(lo, hi, width) in &box_rows {
        let mut f = LinearFunctional::new();
        f.add_entry(blk.unwrap(), lo, lo, 1.0);
        f.add_entry(blk.unwrap(), hi, hi, 1.0);
        p.add_equality(f, width);
    }

    let sol = solve(&p, cfg)?;
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Free(k) => sol.free[k],
            VarMap::Shifted { pos, offset, sign } => offset + sign * sol.primal[blk.unwrap()][(pos, pos)],
        })
        .collect();
    Ok(LpSolution {
        status: sol.status,
        objective: sol.primal_obj + constant,
        x,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn min_x_subject_to_x_at_least_one() {
        let lp = LpProblem { c: vec![1.0], a_eq: vec![], b_eq: vec![], bounds: vec![Bounds { lower: Some(1.0), upper: None }] };
        let s = solve_lp(&lp, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-6, "{}", s.objective);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        // x >= 1 and x <= 0
        let lp = LpProblem { c: vec![0.0], a_eq: vec![], b_eq: vec![], bounds: vec![Bounds::between(1.0, 0.0)] };
        let s = solve_lp(&lp, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::InfeasibleSuspected);
    }

    #[test]
    fn infeasible_equality_over_nonnegatives() {
        let lp = LpProblem {
            c: vec![1.0, 1.0],
            a_eq: vec![vec![1.0, 1.0]],
            b_eq: vec![-1.0],
            bounds: vec![Bounds::NONNEG; 2],
        };
        let s = solve_lp(&lp, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::InfeasibleSuspected);
    }

    #[test]
    fn l1_norm_by_variable_splitting() {
        // x = p − q, x1 + x2 − s = 1, minimize Σ p + q
        let lp = LpProblem {
            c: vec![1.0, 1.0, 1.0, 1.0, 0.0],
            a_eq: vec![vec![1.0, 1.0, -1.0, -1.0, -1.0]],
            b_eq: vec![1.0],
            bounds: vec![Bounds::NONNEG; 5],
        };
        let s = solve_lp(&lp, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_objective_returns_feasible_point() {
        let lp = LpProblem {
            c: vec![0.0, 0.0],
            a_eq: vec![vec![1.0, 2.0]],
            b_eq: vec![2.0],
            bounds: vec![Bounds::NONNEG; 2],
        };
        let s = solve_lp(&lp, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] + 2.0 * s.x[1] - 2.0).abs() < 1e-6);
        assert!(s.x.iter().all(|&v| v >= -1e-9));
    }

    #[test]
    fn free_variables_are_supported() {
        // minimize y subject to y − x = 0, x in [−2, 3]
        let lp = LpProblem {
            c: vec![1.0, 0.0],
            a_eq: vec![vec![1.0, -1.0]],
            b_eq: vec![0.0],
            bounds: vec![Bounds::FREE, Bounds::between(-2.0, 3.0)],
        };
        let s = solve_lp(&lp, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-6, "{}", s.objective);
        assert!((s.x[0] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let lp = LpProblem { c: vec![1.0], a_eq: vec![vec![1.0, 2.0]], b_eq: vec![1.0], bounds: vec![Bounds::NONNEG] };
        assert!(matches!(solve_lp(&lp, &cfg()), Err(SdpError::Dimension(_))));
    }
}
