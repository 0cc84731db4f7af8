//! Infeasible primal-dual path-following method.
//!
//! Search directions use the HKM symmetrization (`dX = −X dS S⁻¹ + …`,
//! symmetrized) with a Mehrotra predictor-corrector step. The Schur complement
//! `M_ij = tr(A_i X A_j S⁻¹)` is formed densely and factored by Cholesky.
//! Free variables never reach the iteration: they are eliminated beforehand
//! (see `presolve`).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::presolve::{presolve, PresolveOutcome, Presolved};
use crate::problem::{BlockKind, SdpProblem};
use crate::SdpError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { gap_tol: 1e-7, feas_tol: 1e-7, max_iter: 200, step_fraction: 0.98 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SdpError> {
        if !(self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(SdpError::Config("tolerances must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(SdpError::Config("step_fraction must lie in (0, 1)".into()));
        }
        if self.max_iter == 0 {
            return Err(SdpError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
    InfeasibleSuspected,
}

/// Objective values and residuals of one iterate, measured on the original problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateInfo {
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub rel_gap: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal block values as full symmetric matrices (diagonal blocks as diagonal matrices).
    pub primal: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    /// Multiplier of each equality.
    pub dual: Vec<f64>,
    /// Dual slack `C − Σ λ_i A_i` per block.
    pub slack: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    pub history: Vec<IterateInfo>,
    pub message: Option<String>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

// ---------------------------------------------------------------------------
// Block storage

#[derive(Debug, Clone)]
enum Blk {
    Psd(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl Blk {
    fn zeros_like(kind: BlockKind, n: usize) -> Blk {
        match kind {
            BlockKind::Psd => Blk::Psd(DMatrix::zeros(n, n)),
            BlockKind::Diagonal => Blk::Diag(DVector::zeros(n)),
        }
    }

    fn identity(kind: BlockKind, n: usize, scale: f64) -> Blk {
        match kind {
            BlockKind::Psd => Blk::Psd(DMatrix::identity(n, n) * scale),
            BlockKind::Diagonal => Blk::Diag(DVector::from_element(n, scale)),
        }
    }

    fn dot(&self, other: &Blk) -> f64 {
        match (self, other) {
            (Blk::Psd(a), Blk::Psd(b)) => a.dot(b),
            (Blk::Diag(a), Blk::Diag(b)) => a.dot(b),
            _ => unreachable!("block kind mismatch"),
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            Blk::Psd(a) => a.norm_squared(),
            Blk::Diag(a) => a.norm_squared(),
        }
    }

    fn axpy(&mut self, alpha: f64, other: &Blk) {
        match (self, other) {
            (Blk::Psd(a), Blk::Psd(b)) => a.zip_apply(b, |x, y| *x += alpha * y),
            (Blk::Diag(a), Blk::Diag(b)) => a.axpy(alpha, b, 1.0),
            _ => unreachable!("block kind mismatch"),
        }
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Blk::Psd(a) => a.clone(),
            Blk::Diag(a) => DMatrix::from_diagonal(a),
        }
    }
}

fn dot_all(a: &[Blk], b: &[Blk]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm_all(a: &[Blk]) -> f64 {
    a.iter().map(Blk::norm_sq).sum::<f64>().sqrt()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest step `alpha` keeping `x + alpha dx` in the cone (`f64::INFINITY` if unbounded).
fn max_step(x: &Blk, dx: &Blk) -> Option<f64> {
    match (x, dx) {
        (Blk::Psd(x), Blk::Psd(dx)) => {
            let chol = Cholesky::new(x.clone())?;
            let l = chol.l();
            // W = L⁻¹ dX L⁻ᵀ
            let tmp = l.solve_lower_triangular(dx)?;
            let w = l.solve_lower_triangular(&tmp.transpose())?;
            let w = sym(&w);
            let min = w.symmetric_eigenvalues().min();
            Some(if min < 0.0 { -1.0 / min } else { f64::INFINITY })
        }
        (Blk::Diag(x), Blk::Diag(dx)) => {
            let mut a = f64::INFINITY;
            for (xi, di) in x.iter().zip(dx.iter()) {
                if *di < 0.0 {
                    a = a.min(-xi / di);
                }
            }
            Some(a)
        }
        _ => unreachable!("block kind mismatch"),
    }
}

// ---------------------------------------------------------------------------
// Reduced problem (no free variables)

/// Constraint data of one block: for each row touching the block, the
/// coefficient matrix as a list of full (both triangles) entries.
#[derive(Debug, Clone, Default)]
struct BlockRows {
    rows: Vec<usize>,
    entries: Vec<Vec<(usize, usize, f64)>>,
}

struct Reduced {
    kinds: Vec<BlockKind>,
    dims: Vec<usize>,
    b: DVector<f64>,
    c: Vec<Blk>,
    per_block: Vec<BlockRows>,
    /// Row-major view: per row, (block, p, q, value) upper-triangular entries.
    rows: Vec<Vec<(usize, usize, usize, f64)>>,
}

impl Reduced {
    fn build(problem: &SdpProblem, pre: &Presolved) -> Reduced {
        let kinds: Vec<BlockKind> = problem.blocks.iter().map(|b| b.kind).collect();
        let dims: Vec<usize> = problem.blocks.iter().map(|b| b.dim).collect();
        let m = pre.rows.len();
        let b = DVector::from_iterator(m, pre.rows.iter().map(|r| r.rhs));
        let mut c: Vec<Blk> = kinds.iter().zip(&dims).map(|(&k, &n)| Blk::zeros_like(k, n)).collect();
        for (&(blk, i, j), &v) in &pre.objective {
            match &mut c[blk] {
                Blk::Psd(a) => {
                    a[(i, j)] += v;
                    if i != j {
                        a[(j, i)] += v;
                    }
                }
                Blk::Diag(a) => a[i] += v,
            }
        }
        let mut per_block = vec![BlockRows::default(); dims.len()];
        let mut rows = Vec::with_capacity(m);
        for (r, row) in pre.rows.iter().enumerate() {
            let mut list = Vec::with_capacity(row.entries.len());
            let mut last_block = usize::MAX;
            for (&(blk, i, j), &v) in &row.entries {
                list.push((blk, i, j, v));
                let br = &mut per_block[blk];
                if blk != last_block {
                    br.rows.push(r);
                    br.entries.push(Vec::new());
                    last_block = blk;
                }
                let e = br.entries.last_mut().unwrap();
                e.push((i, j, v));
                if i != j {
                    e.push((j, i, v));
                }
            }
            rows.push(list);
        }
        Reduced { kinds, dims, b, c, per_block, rows }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// `A(Y)_i = Σ_pq (A_i)_pq Y_pq`; `Y` need not be symmetric.
    fn apply(&self, y: &[Blk]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|row| {
                row.iter()
                    .map(|&(blk, i, j, v)| match &y[blk] {
                        Blk::Psd(a) => {
                            if i == j {
                                v * a[(i, i)]
                            } else {
                                v * (a[(i, j)] + a[(j, i)])
                            }
                        }
                        Blk::Diag(a) => v * a[i],
                    })
                    .sum::<f64>()
            }),
        )
    }

    /// `A*(λ) = Σ λ_i A_i`.
    fn adjoint(&self, lambda: &DVector<f64>) -> Vec<Blk> {
        let mut out: Vec<Blk> =
            self.kinds.iter().zip(&self.dims).map(|(&k, &n)| Blk::zeros_like(k, n)).collect();
        for (row, &l) in self.rows.iter().zip(lambda.iter()) {
            if l == 0.0 {
                continue;
            }
            for &(blk, i, j, v) in row {
                match &mut out[blk] {
                    Blk::Psd(a) => {
                        a[(i, j)] += l * v;
                        if i != j {
                            a[(j, i)] += l * v;
                        }
                    }
                    Blk::Diag(a) => a[i] += l * v,
                }
            }
        }
        out
    }

    /// Adds `⟨Rᵀ A_i L, Rᵀ A_j L⟩` for one block, where `X = L Lᵀ` and `Z = R Rᵀ`.
    /// Equal to `tr(A_i X A_j Z)` but formed as a Gram matrix, so it stays
    /// positive semidefinite when `X` and `Z` are badly conditioned.
    fn schur_gram(&self, br: &BlockRows, f: &Factors, out: &mut DMatrix<f64>) {
        let n = f.lx.nrows();
        let k = br.rows.len();
        let mut g = DMatrix::<f64>::zeros(n * n, k);
        for (a, entries) in br.entries.iter().enumerate() {
            let mut col = g.column_mut(a);
            for &(p, q, v) in entries {
                // (Rᵀ e_p)(e_qᵀ L) = R.row(p)ᵀ L.row(q), stored column-major
                for d in 0..n {
                    let l = v * f.lx[(q, d)];
                    if l == 0.0 {
                        continue;
                    }
                    for c in 0..n {
                        col[d * n + c] += f.r[(p, c)] * l;
                    }
                }
            }
        }
        let gram = g.tr_mul(&g);
        for (a, &ri) in br.rows.iter().enumerate() {
            for (b, &rj) in br.rows.iter().enumerate() {
                out[(ri, rj)] += gram[(a, b)];
            }
        }
    }

    /// Schur complement `M_ij = Σ_blocks tr(A_i X A_j Z)` with `Z = S⁻¹`.
    fn schur(&self, x: &[Blk], z: &[Blk], factors: &[Option<Factors>]) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for (blk, br) in self.per_block.iter().enumerate() {
            if let Some(f) = &factors[blk] {
                let n = f.lx.nrows();
                let k = br.rows.len();
                let nnz: usize = br.entries.iter().map(Vec::len).sum();
                if k * n * n <= GRAM_LIMIT && k * k * n * n <= nnz * nnz {
                    self.schur_gram(br, f, &mut out);
                    continue;
                }
            }
            match (&x[blk], &z[blk]) {
                (Blk::Psd(x), Blk::Psd(z)) => {
                    let n = x.nrows();
                    let xs = x.as_slice();
                    let zs = z.as_slice();
                    for (a, &ri) in br.rows.iter().enumerate() {
                        let ei = &br.entries[a];
                        let rest: usize = br.entries[a..].iter().map(Vec::len).sum();
                        // Pairwise accumulation costs |A_i|·rest; forming
                        // G = Z A_i X first costs |A_i|·n² + rest.
                        if n * n >= rest {
                            for (bb, &rj) in br.rows.iter().enumerate().skip(a) {
                                let mut acc = 0.0;
                                for &(r, s, w) in &br.entries[bb] {
                                    let mut inner = 0.0;
                                    for &(p, q, v) in ei {
                                        inner += v * xs[q * n + r] * zs[s * n + p];
                                    }
                                    acc += w * inner;
                                }
                                out[(ri, rj)] += acc;
                                if ri != rj {
                                    out[(rj, ri)] += acc;
                                }
                            }
                        } else {
                            // G[s, r] = Σ_(p,q) v Z[s,p] X[q,r]
                            let mut g = DMatrix::<f64>::zeros(n, n);
                            for &(p, q, v) in ei {
                                let zc = z.column(p);
                                let xc = x.column(q);
                                g.ger(v, &zc, &xc, 1.0);
                            }
                            let gs = g.as_slice();
                            for (bb, &rj) in br.rows.iter().enumerate().skip(a) {
                                let mut acc = 0.0;
                                for &(r, s, w) in &br.entries[bb] {
                                    acc += w * gs[r * n + s];
                                }
                                out[(ri, rj)] += acc;
                                if ri != rj {
                                    out[(rj, ri)] += acc;
                                }
                            }
                        }
                    }
                }
                (Blk::Diag(x), Blk::Diag(z)) => {
                    let n = x.len();
                    let d: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| a * b).collect();
                    let mut scaled = vec![0.0; n];
                    for (a, &ri) in br.rows.iter().enumerate() {
                        scaled.iter_mut().for_each(|v| *v = 0.0);
                        for &(p, _, v) in &br.entries[a] {
                            scaled[p] += v * d[p];
                        }
                        for (bb, &rj) in br.rows.iter().enumerate().skip(a) {
                            let acc: f64 = br.entries[bb].iter().map(|&(r, _, w)| w * scaled[r]).sum();
                            out[(ri, rj)] += acc;
                            if ri != rj {
                                out[(rj, ri)] += acc;
                            }
                        }
                    }
                }
                _ => unreachable!("block kind mismatch"),
            }
        }
        out
    }
}

/// Largest `rows × side²` buffer formed for a Gram-form Schur block.
const GRAM_LIMIT: usize = 20_000_000;

/// `X = lx lxᵀ` and `S⁻¹ = r rᵀ` for one PSD block.
struct Factors {
    lx: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn psd_factors(x: &Blk, s: &Blk) -> Option<Factors> {
    let (Blk::Psd(x), Blk::Psd(s)) = (x, s) else { return None };
    let lx = Cholesky::new(x.clone())?.unpack();
    let ls = Cholesky::new(s.clone())?.unpack();
    let n = ls.nrows();
    // r = Ls⁻ᵀ, upper triangular
    let inv = ls.solve_lower_triangular(&DMatrix::identity(n, n))?;
    Some(Factors { lx, r: inv.transpose() })
}

fn block_inverse(s: &Blk) -> Option<Blk> {
    match s {
        Blk::Psd(a) => Cholesky::new(a.clone()).map(|c| Blk::Psd(sym(&c.inverse()))),
        Blk::Diag(a) => {
            if a.iter().all(|&v| v > 0.0) {
                Some(Blk::Diag(a.map(|v| 1.0 / v)))
            } else {
                None
            }
        }
    }
}

/// `X · D · Z` for one block (diagonal blocks multiply entrywise).
fn triple(x: &Blk, d: &Blk, z: &Blk) -> Blk {
    match (x, d, z) {
        (Blk::Psd(x), Blk::Psd(d), Blk::Psd(z)) => Blk::Psd(x * d * z),
        (Blk::Diag(x), Blk::Diag(d), Blk::Diag(z)) => {
            Blk::Diag(x.component_mul(d).component_mul(z))
        }
        _ => unreachable!("block kind mismatch"),
    }
}

fn factor(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    for boost in [1e-14, 1e-12, 1e-10, 1e-8, 1e-6] {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += boost * scale;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Some(c);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Driver

struct Iterate {
    x: Vec<Blk>,
    s: Vec<Blk>,
    lambda: DVector<f64>,
}

/// Solves `problem` to the tolerances in `cfg`.
///
/// Solver trouble is reported through [`SdpSolution::status`] together with
/// the best iterate found; `Err` is reserved for malformed input.
pub fn solve(problem: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    cfg.validate()?;
    let pre = match presolve(problem) {
        PresolveOutcome::Ready(p) => p,
        PresolveOutcome::Infeasible(msg) => return Ok(infeasible_stub(problem, msg)),
    };
    let red = Reduced::build(problem, &pre);
    Ok(run(problem, &pre, &red, cfg))
}

fn infeasible_stub(problem: &SdpProblem, msg: String) -> SdpSolution {
    SdpSolution {
        status: SolveStatus::InfeasibleSuspected,
        primal: problem.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        free: vec![0.0; problem.free_vars],
        dual: vec![0.0; problem.equalities.len()],
        slack: problem.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        primal_infeas: f64::INFINITY,
        dual_infeas: f64::INFINITY,
        rel_gap: f64::INFINITY,
        iterations: 0,
        history: Vec::new(),
        message: Some(msg),
    }
}

fn initial_point(red: &Reduced) -> Iterate {
    let m = red.m();
    let mut x = Vec::with_capacity(red.dims.len());
    let mut s = Vec::with_capacity(red.dims.len());
    for (blk, (&kind, &n)) in red.kinds.iter().zip(&red.dims).enumerate() {
        let nf = n as f64;
        let br = &red.per_block[blk];
        let mut a_norm_max: f64 = 0.0;
        let mut ratio_max: f64 = 0.0;
        for (k, &r) in br.rows.iter().enumerate() {
            let norm = br.entries[k].iter().map(|&(_, _, v)| v * v).sum::<f64>().sqrt();
            a_norm_max = a_norm_max.max(norm);
            ratio_max = ratio_max.max((1.0 + red.b[r].abs()) / (1.0 + norm));
        }
        let c_norm = red.c[blk].norm_sq().sqrt();
        let xi = 10f64.max(nf.sqrt()).max(nf * ratio_max);
        let eta = 10f64.max(nf.sqrt()).max(a_norm_max.max(c_norm));
        x.push(Blk::identity(kind, n, xi));
        s.push(Blk::identity(kind, n, eta));
    }
    Iterate { x, s, lambda: DVector::zeros(m) }
}

struct Measures {
    info: IterateInfo,
    rp: DVector<f64>,
    rd: Vec<Blk>,
}

fn measure(red: &Reduced, it: &Iterate, constant: f64, nu: f64, b_norm: f64, c_norm: f64) -> Measures {
    let ax = red.apply(&it.x);
    let rp = &red.b - ax;
    let aty = red.adjoint(&it.lambda);
    let mut rd: Vec<Blk> = red.c.clone();
    for (k, blk) in rd.iter_mut().enumerate() {
        blk.axpy(-1.0, &aty[k]);
        blk.axpy(-1.0, &it.s[k]);
    }
    let pobj = dot_all(&red.c, &it.x) + constant;
    let dobj = red.b.dot(&it.lambda) + constant;
    let mu = dot_all(&it.x, &it.s) / nu;
    let info = IterateInfo {
        primal_obj: pobj,
        dual_obj: dobj,
        primal_infeas: rp.norm() / (1.0 + b_norm),
        dual_infeas: norm_all(&rd) / (1.0 + c_norm),
        rel_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        mu,
    };
    Measures { info, rp, rd }
}


struct Direction {
    dx: Vec<Blk>,
    ds: Vec<Blk>,
    dl: DVector<f64>,
}

fn direction(
    red: &Reduced,
    it: &Iterate,
    z: &[Blk],
    chol: &Cholesky<f64, Dyn>,
    rd: &[Blk],
    sigma_mu: f64,
    second_order: Option<&Direction>,
) -> Direction {
    // rhs = b − σμ A(Z) + A(X R_d Z) + A(dXa dSa Z)
    let nb = red.dims.len();
    let mut t: Vec<Blk> = (0..nb).map(|k| triple(&it.x[k], &rd[k], &z[k])).collect();
    if let Some(pred) = second_order {
        for k in 0..nb {
            let extra = triple(&pred.dx[k], &pred.ds[k], &z[k]);
            t[k].axpy(1.0, &extra);
        }
    }
    if sigma_mu != 0.0 {
        for k in 0..nb {
            t[k].axpy(-sigma_mu, &z[k]);
        }
    }
    let rhs = &red.b + red.apply(&t);
    let mut dl = if rhs.is_empty() { rhs.clone() } else { chol.solve(&rhs) };
    if !rhs.is_empty() {
        // refine against the operator itself; the formed Schur matrix loses accuracy near optimality
        let rhs_norm = rhs.norm().max(1e-300);
        for _ in 0..3 {
            let op = schur_apply(red, &it.x, z, &dl);
            let r = &rhs - op;
            if r.norm() <= 1e-14 * rhs_norm {
                break;
            }
            dl += chol.solve(&r);
        }
    }
    let atdl = red.adjoint(&dl);
    let mut ds = rd.to_vec();
    for k in 0..nb {
        ds[k].axpy(-1.0, &atdl[k]);
    }
    // dX = σμ Z − X − sym(X dS Z) − sym(dXa dSa Z)
    let mut dx = Vec::with_capacity(nb);
    for k in 0..nb {
        let mut d = z[k].clone();
        match &mut d {
            Blk::Psd(a) => *a *= sigma_mu,
            Blk::Diag(a) => *a *= sigma_mu,
        }
        d.axpy(-1.0, &it.x[k]);
        let mut corr = triple(&it.x[k], &ds[k], &z[k]);
        if let Some(pred) = second_order {
            corr.axpy(1.0, &triple(&pred.dx[k], &pred.ds[k], &z[k]));
        }
        if let Blk::Psd(a) = &corr {
            corr = Blk::Psd(sym(a));
        }
        d.axpy(-1.0, &corr);
        dx.push(d);
    }
    Direction { dx, ds, dl }
}

/// `A(X A*(λ) Z)`, the Schur operator applied without forming it.
fn schur_apply(red: &Reduced, x: &[Blk], z: &[Blk], lambda: &DVector<f64>) -> DVector<f64> {
    let at = red.adjoint(lambda);
    let prod: Vec<Blk> = (0..at.len()).map(|k| triple(&x[k], &at[k], &z[k])).collect();
    red.apply(&prod)
}

/// `x + a·dx` for the largest `a = step · 0.7ᵏ` whose blocks still factor.
fn interior_step(x: &[Blk], dx: &[Blk], step: f64) -> Option<(f64, Vec<Blk>)> {
    let mut a = step;
    for _ in 0..40 {
        let next: Vec<Blk> = x
            .iter()
            .zip(dx)
            .map(|(xk, dk)| {
                let mut n = xk.clone();
                n.axpy(a, dk);
                if let Blk::Psd(m) = &mut n {
                    *m = sym(m);
                }
                n
            })
            .collect();
        let inside = next.iter().all(|b| match b {
            Blk::Psd(m) => Cholesky::new(m.clone()).is_some(),
            Blk::Diag(d) => d.iter().all(|&v| v > 0.0),
        });
        if inside {
            return Some((a, next));
        }
        a *= 0.7;
    }
    None
}

fn step_lengths(it: &Iterate, dir: &Direction) -> Option<(f64, f64)> {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for k in 0..it.x.len() {
        ap = ap.min(max_step(&it.x[k], &dir.dx[k])?);
        ad = ad.min(max_step(&it.s[k], &dir.ds[k])?);
    }
    Some((ap, ad))
}

fn run(problem: &SdpProblem, pre: &Presolved, red: &Reduced, cfg: &SolverConfig) -> SdpSolution {
    let nu = red.dims.iter().sum::<usize>().max(1) as f64;
    let b_norm = red.b.norm();
    let c_norm = norm_all(&red.c);
    let constant = pre.objective_constant;
    let mut it = initial_point(red);
    let mut history = Vec::new();
    // Without convergence each side reports the iterate with the best
    // objective after charging its residual against the other side's norm:
    // `⟨C, X⟩ + ‖λ‖‖r_p‖` and `bᵀλ − ‖X‖‖r_d‖`.
    let mut best_p: Option<(f64, Vec<Blk>)> = None;
    let mut best_d: Option<(f64, DVector<f64>, Vec<Blk>)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut message = None;
    let mut iterations = 0;
    let mut short_steps = 0;

    for iter in 0..=cfg.max_iter {
        let meas = measure(red, &it, constant, nu, b_norm, c_norm);
        let info = meas.info;
        history.push(info);
        let kp = info.primal_obj + it.lambda.norm() * meas.rp.norm();
        if kp.is_finite() && best_p.as_ref().is_none_or(|(k, _)| kp < *k) {
            best_p = Some((kp, it.x.clone()));
        }
        let kd = -(info.dual_obj - norm_all(&it.x) * norm_all(&meas.rd));
        if kd.is_finite() && best_d.as_ref().is_none_or(|(k, _, _)| kd < *k) {
            best_d = Some((kd, it.lambda.clone(), it.s.clone()));
        }
        if !(info.primal_obj.is_finite() && info.dual_obj.is_finite()) {
            status = SolveStatus::NumericalFailure;
            message = Some("non-finite objective".into());
            break;
        }
        if info.primal_infeas <= cfg.feas_tol && info.dual_infeas <= cfg.feas_tol && info.rel_gap <= cfg.gap_tol {
            status = SolveStatus::Optimal;
            best_p = None;
            best_d = None;
            break;
        }
        if let Some(msg) = infeasibility(red, &it, &meas, iter) {
            status = SolveStatus::InfeasibleSuspected;
            message = Some(msg);
            best_p = None;
            best_d = None;
            break;
        }
        let scale = 1e12 * (1.0 + b_norm + c_norm);
        if it.lambda.norm() > scale || norm_all(&it.x) > scale {
            // near feasibility on both sides: numerical failure
            let least = |f: fn(&IterateInfo) -> f64| history.iter().map(f).fold(f64::INFINITY, f64::min);
            let near = (cfg.feas_tol * 1e2).max(1e-6);
            if least(|h| h.primal_infeas) <= near && least(|h| h.dual_infeas) <= near {
                status = SolveStatus::NumericalFailure;
            } else {
                status = SolveStatus::InfeasibleSuspected;
                best_p = None;
                best_d = None;
            }
            message = Some("iterates diverged".into());
            break;
        }
        if iter >= 40 {
            let score = |h: &IterateInfo| h.primal_infeas.max(h.dual_infeas).max(h.rel_gap);
            let recent = history[iter - 20..].iter().map(score).fold(f64::INFINITY, f64::min);
            let before = history[..iter - 20].iter().map(score).fold(f64::INFINITY, f64::min);
            if recent > 0.5 * before {
                status = SolveStatus::NumericalFailure;
                message = Some("no progress in 20 iterations".into());
                break;
            }
        }
        if iter == cfg.max_iter {
            break;
        }
        iterations = iter + 1;

        let z: Vec<Blk> = match it.s.iter().map(block_inverse).collect::<Option<Vec<_>>>() {
            Some(z) => z,
            None => {
                status = SolveStatus::NumericalFailure;
                message = Some("dual slack lost definiteness".into());
                break;
            }
        };
        let factors: Vec<Option<Factors>> = it.x.iter().zip(&it.s).map(|(x, s)| psd_factors(x, s)).collect();
        let z: Vec<Blk> = z
            .into_iter()
            .zip(&factors)
            .map(|(zk, f)| match f {
                Some(f) => Blk::Psd(sym(&(&f.r * f.r.transpose()))),
                None => zk,
            })
            .collect();
        let mmat = red.schur(&it.x, &z, &factors);
        let chol = if red.m() == 0 {
            Cholesky::new(DMatrix::identity(1, 1)).unwrap()
        } else {
            match factor(&mmat) {
                Some(c) => c,
                None => {
                    status = SolveStatus::NumericalFailure;
                    message = Some("singular Schur complement".into());
                    break;
                }
            }
        };

        let mu = info.mu;
        let pred = direction(red, &it, &z, &chol, &meas.rd, 0.0, None);
        let Some((ap, ad)) = step_lengths(&it, &pred) else {
            status = SolveStatus::NumericalFailure;
            message = Some("iterate left the cone".into());
            break;
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..it.x.len() {
            let mut xa = it.x[k].clone();
            xa.axpy(ap, &pred.dx[k]);
            let mut sa = it.s[k].clone();
            sa.axpy(ad, &pred.ds[k]);
            mu_aff += xa.dot(&sa);
        }
        mu_aff /= nu;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        let corr = direction(red, &it, &z, &chol, &meas.rd, sigma * mu, Some(&pred));
        let Some((ap, ad)) = step_lengths(&it, &corr) else {
            status = SolveStatus::NumericalFailure;
            message = Some("iterate left the cone".into());
            break;
        };
        let (Some((ap, x_next)), Some((ad, s_next))) = (
            interior_step(&it.x, &corr.dx, (cfg.step_fraction * ap).min(1.0)),
            interior_step(&it.s, &corr.ds, (cfg.step_fraction * ad).min(1.0)),
        ) else {
            status = SolveStatus::NumericalFailure;
            message = Some("step length collapsed".into());
            break;
        };
        if ap < 1e-12 && ad < 1e-12 {
            status = SolveStatus::NumericalFailure;
            message = Some("step length collapsed".into());
            break;
        }
        short_steps = if ap < 1e-3 && ad < 1e-3 { short_steps + 1 } else { 0 };
        if short_steps >= 10 {
            status = SolveStatus::NumericalFailure;
            message = Some("stalled on short steps".into());
            break;
        }
        it.x = x_next;
        it.s = s_next;
        it.lambda.axpy(ad, &corr.dl, 1.0);
    }

    let fin = match (best_p, best_d) {
        (Some((_, x)), Some((_, lambda, s))) => Iterate { x, s, lambda },
        _ => it,
    };
    finish(problem, pre, red, fin, status, iterations, history, message)
}

/// Heuristic certificates of primal or dual infeasibility.
fn infeasibility(red: &Reduced, it: &Iterate, meas: &Measures, iter: usize) -> Option<String> {
    if iter < 5 {
        return None;
    }
    // Primal infeasible: λ with A*(λ) ⪯ 0 and b'λ > 0. Along the iterates
    // A*(λ) = C − R_d − S with S ⪰ 0, so a large b'λ relative to ‖C − R_d‖
    // is such a ray.
    let by = red.b.dot(&it.lambda);
    if by > 0.0 {
        let mut c_minus_rd = red.c.clone();
        for (k, blk) in c_minus_rd.iter_mut().enumerate() {
            blk.axpy(-1.0, &meas.rd[k]);
        }
        if norm_all(&c_minus_rd) / by < 1e-8 {
            return Some("dual ray found: the equality constraints admit no point in the cone".into());
        }
    }
    // Dual infeasible: X ⪰ 0 with A(X) = 0 and <C, X> < 0.
    let cx = dot_all(&red.c, &it.x);
    if cx < 0.0 {
        let ax = &red.b - &meas.rp;
        if ax.norm() / (-cx) < 1e-8 {
            return Some("primal ray found: the objective is unbounded below".into());
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &SdpProblem,
    pre: &Presolved,
    red: &Reduced,
    it: Iterate,
    status: SolveStatus,
    iterations: usize,
    history: Vec<IterateInfo>,
    message: Option<String>,
) -> SdpSolution {
    let primal: Vec<DMatrix<f64>> = it.x.iter().map(Blk::to_matrix).collect();
    let free = pre.recover_free(&primal);
    let dual = pre.recover_dual(it.lambda.as_slice());
    let slack: Vec<DMatrix<f64>> = it.s.iter().map(Blk::to_matrix).collect();

    // Residuals and objectives against the original data.
    let primal_obj = problem.objective.eval(&primal, &free);
    let dual_obj: f64 = problem.equalities.iter().zip(&dual).map(|(e, l)| e.rhs * l).sum();
    let b_norm = problem.equalities.iter().map(|e| e.rhs * e.rhs).sum::<f64>().sqrt();
    let rp = problem
        .equalities
        .iter()
        .map(|e| (e.rhs - e.functional.eval(&primal, &free)).powi(2))
        .sum::<f64>()
        .sqrt();
    let (dual_res, c_norm) = dual_residual(problem, &dual, &slack);
    let rel_gap = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs());
    let _ = red;
    SdpSolution {
        status,
        primal,
        free,
        dual,
        slack,
        primal_obj,
        dual_obj,
        primal_infeas: rp / (1.0 + b_norm),
        dual_infeas: dual_res / (1.0 + c_norm),
        rel_gap,
        iterations,
        history,
        message,
    }
}

/// `‖C − A*(λ) − S‖` over blocks plus `‖c_w − Fᵀλ‖`, and `‖C‖`.
pub(crate) fn dual_residual(problem: &SdpProblem, dual: &[f64], slack: &[DMatrix<f64>]) -> (f64, f64) {
    let mut r: Vec<DMatrix<f64>> = problem.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect();
    let mut rw = vec![0.0; problem.free_vars];
    let mut add = |f: &crate::problem::LinearFunctional, scale: f64, r: &mut Vec<DMatrix<f64>>| {
        for e in &f.entries {
            r[e.block][(e.row, e.col)] += scale * e.value;
            if e.row != e.col {
                r[e.block][(e.col, e.row)] += scale * e.value;
            }
        }
        for &(k, v) in &f.free {
            rw[k] += scale * v;
        }
    };
    add(&problem.objective, 1.0, &mut r);
    let c_norm = r.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    for (eq, &l) in problem.equalities.iter().zip(dual) {
        add(&eq.functional, -l, &mut r);
    }
    for (k, s) in slack.iter().enumerate() {
        r[k] -= s;
    }
    let total = r.iter().map(|m| m.norm_squared()).sum::<f64>() + rw.iter().map(|v| v * v).sum::<f64>();
    (total.sqrt(), c_norm)
}
