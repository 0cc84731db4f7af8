//! Ground truth and convex baselines: support enumeration, ℓ₁ and trace heuristics.

use std::time::Instant;

use momentcard_sdp::{solve, solve_lp, Block, Bounds, LinearFunctional, LpProblem, SdpProblem, SolveStatus, SolverConfig};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::numerical_rank;
use crate::poly::subsets;
use crate::{Error, Result};

/// Largest dimension [`brute_force_card`] accepts.
pub const MAX_BRUTE_FORCE_DIM: usize = 14;

/// Slack subtracted before rounding a relaxation bound up.
pub const ROUNDING_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub optimum: usize,
    pub witness: Vec<f64>,
    pub support: Vec<usize>,
    pub lps_solved: usize,
    pub wall_time_secs: f64,
}

/// `⌈l − 10⁻⁴⌉`.
pub fn rounded_bound(l: f64) -> i64 {
    (l - ROUNDING_SLACK).ceil() as i64
}

/// Largest violation `max_j (b_j − a_jᵀx)⁺`.
pub fn max_violation(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(row, &bj)| bj - row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>())
        .fold(0.0, f64::max)
}

fn dims(a: &[Vec<f64>], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} rows, {} right-hand sides", a.len(), b.len())));
    }
    let n = a.first().map_or(0, Vec::len);
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("constraint rows must be nonempty and of equal length".into()));
    }
    Ok(n)
}

/// Phase-one LP for `{A_S x_S ≥ b}`: minimize artificial slack, feasible iff the optimum vanishes.
fn support_feasible(a: &[Vec<f64>], b: &[f64], support: &[usize], cfg: &SolverConfig) -> Result<Option<Vec<f64>>> {
    let n = a[0].len();
    let k = support.len();
    let m = a.len();
    // variables: x_S (free), surplus s (m), artificial r (m)
    let nv = k + 2 * m;
    let mut c = vec![0.0; nv];
    for v in c.iter_mut().skip(k + m) {
        *v = 1.0;
    }
    let mut a_eq = Vec::with_capacity(m);
    for (j, row) in a.iter().enumerate() {
        let mut r = vec![0.0; nv];
        for (p, &i) in support.iter().enumerate() {
            r[p] = row[i];
        }
        r[k + j] = -1.0;
        r[k + m + j] = 1.0;
        a_eq.push(r);
    }
    let mut bounds = vec![Bounds::FREE; k];
    bounds.extend(std::iter::repeat(Bounds::NONNEG).take(2 * m));
    let lp = LpProblem { c, a_eq, b_eq: b.to_vec(), bounds };
    let sol = solve_lp(&lp, cfg)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::SolveFailed(format!("phase-one LP for support {support:?} ended with {:?}", sol.status)));
    }
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if sol.objective > 1e-6 * scale {
        return Ok(None);
    }
    let mut x = vec![0.0; n];
    for (p, &i) in support.iter().enumerate() {
        x[i] = sol.x[p];
    }
    polish(a, b, support, &mut x);
    Ok(Some(x))
}

/// Moves `x` onto the violated rows by least squares within the support.
fn polish(a: &[Vec<f64>], b: &[f64], support: &[usize], x: &mut [f64]) {
    for _ in 0..5 {
        let residual = |x: &[f64], j: usize| b[j] - a[j].iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>();
        let violated: Vec<usize> = (0..a.len()).filter(|&j| residual(x, j) > 0.0).collect();
        if violated.is_empty() {
            return;
        }
        let m = DMatrix::from_fn(violated.len(), support.len(), |r, c| a[violated[r]][support[c]]);
        // aim slightly inside so rounding does not leave a violation
        let rhs = nalgebra::DVector::from_iterator(
            violated.len(),
            violated.iter().map(|&j| residual(x, j) + 1e-12 * (1.0 + b[j].abs())),
        );
        let Ok(step) = m.svd(true, true).solve(&rhs, 1e-12) else { return };
        for (c, &i) in support.iter().enumerate() {
            x[i] += step[c];
        }
    }
}

/// Minimum cardinality of `{x : Ax ≥ b}` by enumerating supports in order of size.
///
/// Supports of one size are probed in parallel; the lexicographically first
/// feasible support wins.
pub fn brute_force_card(a: &[Vec<f64>], b: &[f64], cfg: &SolverConfig) -> Result<OracleReport> {
    let n = dims(a, b)?;
    if n > MAX_BRUTE_FORCE_DIM {
        return Err(Error::TooLarge(format!("brute force limited to {MAX_BRUTE_FORCE_DIM} variables, got {n}")));
    }
    let start = Instant::now();
    let mut lps = 0;
    for k in 0..=n {
        let sets = subsets(n, k);
        if k == 0 {
            lps += 1;
            if max_violation(a, b, &vec![0.0; n]) <= 0.0 {
                return Ok(OracleReport {
                    optimum: 0,
                    witness: vec![0.0; n],
                    support: Vec::new(),
                    lps_solved: 0,
                    wall_time_secs: start.elapsed().as_secs_f64(),
                });
            }
            continue;
        }
        let found: Vec<Result<Option<Vec<f64>>>> = sets.par_iter().map(|s| support_feasible(a, b, s, cfg)).collect();
        lps += sets.len();
        for (s, r) in sets.iter().zip(found) {
            if let Some(x) = r? {
                return Ok(OracleReport {
                    optimum: k,
                    witness: x,
                    support: s.clone(),
                    lps_solved: lps - 1,
                    wall_time_secs: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Err(Error::Infeasible("no support admits a feasible point".into()))
}

/// `minimize ‖x‖₁  s.t.  Ax ≥ b` via `x = p − q`.
pub fn l1_heuristic(a: &[Vec<f64>], b: &[f64], cfg: &SolverConfig) -> Result<(f64, Vec<f64>)> {
    let n = dims(a, b)?;
    let m = a.len();
    // variables: p (n), q (n), surplus (m)
    let nv = 2 * n + m;
    let mut c = vec![1.0; 2 * n];
    c.extend(std::iter::repeat(0.0).take(m));
    let a_eq = a
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let mut r = vec![0.0; nv];
            for i in 0..n {
                r[i] = row[i];
                r[n + i] = -row[i];
            }
            r[2 * n + j] = -1.0;
            r
        })
        .collect();
    let lp = LpProblem { c, a_eq, b_eq: b.to_vec(), bounds: vec![Bounds::NONNEG; nv] };
    let sol = solve_lp(&lp, cfg)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::InfeasibleSuspected => return Err(Error::Infeasible("ℓ1 program has no feasible point".into())),
        s => return Err(Error::SolveFailed(format!("ℓ1 program ended with {s:?}"))),
    }
    let x: Vec<f64> = (0..n).map(|i| sol.x[i] - sol.x[n + i]).collect();
    Ok((sol.objective, x))
}

/// Result of the trace heuristic.
#[derive(Debug, Clone)]
pub struct NuclearResult {
    pub value: f64,
    pub x: DMatrix<f64>,
    /// Rank of the solver's matrix before reduction.
    pub solver_rank: usize,
    pub rank: usize,
}

/// `minimize Tr X  s.t.  Tr(A_j X) = b_j,  X ⪰ 0`, followed by rank reduction
/// within the optimal face.
pub fn nuclear_heuristic(a_list: &[DMatrix<f64>], b: &[f64], cfg: &SolverConfig, rank_tol: f64) -> Result<NuclearResult> {
    if a_list.len() != b.len() {
        return Err(Error::Dimension(format!("{} matrices, {} right-hand sides", a_list.len(), b.len())));
    }
    let Some(n) = a_list.first().map(|a| a.nrows()) else {
        return Err(Error::InvalidArgument("no constraints".into()));
    };
    let mut p = SdpProblem::new();
    let blk = p.add_block(Block::psd(n));
    let mut obj = LinearFunctional::new();
    for i in 0..n {
        obj.add_entry(blk, i, i, 1.0);
    }
    p.objective = obj;
    for (a, &bj) in a_list.iter().zip(b) {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension("constraint matrices of different sizes".into()));
        }
        let mut f = LinearFunctional::new();
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                if v != 0.0 {
                    f.add_entry(blk, i, j, v);
                }
            }
        }
        p.add_equality(f, bj);
    }
    let sol = solve(&p, cfg)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::InfeasibleSuspected => return Err(Error::Infeasible("no PSD matrix satisfies the constraints".into())),
        s => return Err(Error::SolveFailed(format!("trace heuristic ended with {s:?}"))),
    }
    let x = sol.primal[blk].clone();
    let solver_rank = numerical_rank(&x, rank_tol);
    let mut reduced = x.clone();
    for _ in 0..n {
        match reduce_rank(&reduced, a_list, rank_tol) {
            Some(next) => reduced = next,
            None => break,
        }
    }
    let rank = numerical_rank(&reduced, rank_tol);
    Ok(NuclearResult { value: reduced.trace(), x: reduced, solver_rank, rank })
}

/// One step of rank reduction: moves `X = V Vᵀ` along `V Δ Vᵀ` with `Δ` in the null space
/// of the constraint and objective maps until an eigenvalue of `I − tΔ` hits zero.
fn reduce_rank(x: &DMatrix<f64>, a_list: &[DMatrix<f64>], rank_tol: f64) -> Option<DMatrix<f64>> {
    let eig = x.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1.0);
    let keep: Vec<usize> = (0..x.nrows()).filter(|&i| eig.eigenvalues[i] > rank_tol * top).collect();
    let r = keep.len();
    if r <= 1 {
        return None;
    }
    let v = DMatrix::from_fn(x.nrows(), r, |i, k| eig.eigenvectors[(i, keep[k])] * eig.eigenvalues[keep[k]].sqrt());
    // Unknowns: upper triangle of Δ (r(r+1)/2); rows: Tr(VᵀA_jV Δ) = 0 and Tr(VᵀV Δ) = 0.
    let nd = r * (r + 1) / 2;
    let mut mats: Vec<DMatrix<f64>> = a_list.iter().map(|a| v.transpose() * a * &v).collect();
    mats.push(v.transpose() * &v);
    if mats.len() >= nd {
        return None;
    }
    let rows = DMatrix::from_fn(mats.len(), nd, |row, col| {
        let (i, j) = upper_pair(r, col);
        let m = &mats[row];
        if i == j {
            m[(i, i)]
        } else {
            m[(i, j)] + m[(j, i)]
        }
    });
    // null vector from the SVD of the constraint rows
    let svd = rows.transpose().svd(true, false);
    let u = svd.u?;
    let s = &svd.singular_values;
    let smax = s.amax().max(1.0);
    let col = (0..nd).find(|&c| c >= s.len() || s[c] <= 1e-10 * smax)?;
    let d = u.column(col);
    let mut delta = DMatrix::zeros(r, r);
    for c in 0..nd {
        let (i, j) = upper_pair(r, c);
        delta[(i, j)] = d[c];
        delta[(j, i)] = d[c];
    }
    let lmax = delta.clone().symmetric_eigenvalues().max();
    let delta = if lmax <= 1e-12 { -delta } else { delta };
    let lmax = delta.clone().symmetric_eigenvalues().max();
    if lmax <= 1e-12 {
        return None;
    }
    let step = DMatrix::identity(r, r) - delta / lmax;
    let next = &v * step * v.transpose();
    Some((&next + next.transpose()) * 0.5)
}

fn upper_pair(r: usize, mut col: usize) -> (usize, usize) {
    for i in 0..r {
        let len = r - i;
        if col < len {
            return (i, i + col);
        }
        col -= len;
    }
    unreachable!("column index out of range")
}
