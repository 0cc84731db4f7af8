//! Semialgebraic programs and their moment / sum-of-squares relaxations.
//!
//! A relaxation of order `N` is assembled as a single standard-form SDP: the
//! Putinar program
//!
//! ```text
//! maximize t  s.t.  f − t = q₀ + Σ_k g_k q_k + Σ_j h_j λ_j
//! ```
//!
//! with one coefficient-matching equality per monomial of degree `≤ 2N`, Gram
//! blocks for the SOS multipliers `q_k` and free coefficients for `λ_j`. Its
//! Lagrange dual is the moment program: the multiplier of the row for `α`
//! is `−y_α`, the dual slack of each Gram block is the moment or localizing
//! matrix of `y`, the free columns force the localizing entries of each `h_j`
//! to vanish and the column of `t` forces `y₀ = 1`. One solve therefore gives
//! both the SOS value (primal) and the moment bound `l_N` (dual).

use momentcard_sdp::{solve, Block, LinearFunctional, SdpProblem, SdpSolution, SolveStatus, SolverConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::moment::{assemble_values, localizing_layout, MatrixLayout, MomentVector};
use crate::poly::{basis, basis_size, sigma_k, sym_index, Monomial, MonomialBasis, NewtonPolytope, Polynomial};
use crate::{Error, Result};

/// Largest matrix side accepted by [`min_rank_program`].
pub const MAX_RANK_DIM: usize = 4;

/// `minimize f(x)  s.t.  g_k(x) ≥ 0,  h_j(x) = 0,  ball(x) ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicProgram {
    pub variables: Vec<String>,
    pub objective: Polynomial,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
    /// Squared radius `α` of the compactness ball.
    pub alpha: f64,
    /// Compactness constraint, `α − ‖x‖²` unless the builder chose another norm.
    pub ball: Option<Polynomial>,
}

/// Constraint values of a program at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCheck {
    pub objective: f64,
    /// Smallest inequality value, ball included (`+∞` if there are none).
    pub min_inequality: f64,
    pub max_equality: f64,
}

impl PointCheck {
    pub fn feasible(&self, tol: f64) -> bool {
        self.min_inequality >= -tol && self.max_equality <= tol
    }
}

impl SemialgebraicProgram {
    pub fn new(variables: Vec<String>, objective: Polynomial, alpha: f64) -> Result<Self> {
        let n = variables.len();
        if objective.nvars() != n {
            return Err(Error::Dimension(format!("objective in {} variables, {} names", objective.nvars(), n)));
        }
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must exceed 1, got {alpha}")));
        }
        let mut ball = Polynomial::constant(n, alpha);
        for i in 0..n {
            let x = Polynomial::var(n, i);
            ball = &ball - &(&x * &x);
        }
        Ok(SemialgebraicProgram {
            variables,
            objective,
            inequalities: Vec::new(),
            equalities: Vec::new(),
            alpha,
            ball: Some(ball),
        })
    }

    pub fn nvars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_inequality(&mut self, g: Polynomial) -> Result<()> {
        self.check(&g)?;
        self.inequalities.push(g);
        Ok(())
    }

    pub fn add_equality(&mut self, h: Polynomial) -> Result<()> {
        self.check(&h)?;
        self.equalities.push(h);
        Ok(())
    }

    fn check(&self, p: &Polynomial) -> Result<()> {
        if p.nvars() != self.nvars() {
            return Err(Error::Dimension(format!("constraint in {} variables, program in {}", p.nvars(), self.nvars())));
        }
        Ok(())
    }

    /// Inequalities followed by the ball constraint.
    pub fn constraints(&self) -> Vec<&Polynomial> {
        self.inequalities.iter().chain(self.ball.as_ref()).collect()
    }

    /// Copy without the `k`-th entry of [`constraints`](Self::constraints).
    pub fn drop_constraint(&self, k: usize) -> Result<Self> {
        let mut out = self.clone();
        if k < out.inequalities.len() {
            out.inequalities.remove(k);
        } else if k == out.inequalities.len() && out.ball.is_some() {
            out.ball = None;
        } else {
            return Err(Error::InvalidArgument(format!("no constraint {k}; the program has {}", self.constraints().len())));
        }
        Ok(out)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<PointCheck> {
        let objective = self.objective.eval(x)?;
        let mut min_inequality = f64::INFINITY;
        for g in self.constraints() {
            min_inequality = min_inequality.min(g.eval(x)?);
        }
        let mut max_equality: f64 = 0.0;
        for h in &self.equalities {
            max_equality = max_equality.max(h.eval(x)?.abs());
        }
        Ok(PointCheck { objective, min_inequality, max_equality })
    }

    pub fn max_degree(&self) -> usize {
        self.constraints()
            .into_iter()
            .chain(&self.equalities)
            .chain(std::iter::once(&self.objective))
            .map(|p| p.degree() as usize)
            .max()
            .unwrap_or(0)
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_rows(a: &[Vec<f64>], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} constraint rows, {} right-hand sides", a.len(), b.len())));
    }
    let n = a.first().map_or(0, Vec::len);
    if a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("constraint rows of different lengths".into()));
    }
    Ok(n)
}

/// `minimize Σ vᵢ  s.t.  (vᵢ − 1)xᵢ = 0,  vᵢ ≥ 0,  Ax ≥ b` over `(x, v)`.
pub fn min_card_program(a: &[Vec<f64>], b: &[f64], alpha: f64) -> Result<SemialgebraicProgram> {
    let n = check_rows(a, b)?;
    if n == 0 {
        return Err(Error::InvalidArgument("cardinality program needs at least one variable and one row".into()));
    }
    card_program(n, a, b, alpha)
}

fn card_program(n: usize, a: &[Vec<f64>], b: &[f64], alpha: f64) -> Result<SemialgebraicProgram> {
    let nv = 2 * n;
    let mut variables = names("x", n);
    variables.extend(names("v", n));
    let mut objective = Polynomial::zero(nv);
    for i in 0..n {
        objective = &objective + &Polynomial::var(nv, n + i);
    }
    let mut sap = SemialgebraicProgram::new(variables, objective, alpha)?;
    let one = Polynomial::constant(nv, 1.0);
    for i in 0..n {
        let x = Polynomial::var(nv, i);
        let v = Polynomial::var(nv, n + i);
        sap.add_equality(&(&v - &one) * &x)?;
    }
    for i in 0..n {
        sap.add_inequality(Polynomial::var(nv, n + i))?;
    }
    for (row, &bj) in a.iter().zip(b) {
        let mut g = Polynomial::constant(nv, -bj);
        for (i, &aij) in row.iter().enumerate() {
            g = &g + &Polynomial::var(nv, i).scale(aij);
        }
        sap.add_inequality(g)?;
    }
    Ok(sap)
}

/// Point `(x, v)` of [`min_card_program`] with `vᵢ = 1` exactly on the support of `x`.
pub fn min_card_point(x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    p.extend(x.iter().map(|&xi| if xi != 0.0 { 1.0 } else { 0.0 }));
    p
}

/// Number of entries in the upper triangle of an `n × n` matrix.
pub fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `Tr(A X)` as a linear polynomial in the upper-triangular entries of `X`.
fn trace_form(a: &DMatrix<f64>, nv: usize, offset: usize) -> Polynomial {
    let n = a.nrows();
    let mut p = Polynomial::zero(nv);
    for i in 0..n {
        for j in i..n {
            let c = if i == j { a[(i, i)] } else { a[(i, j)] + a[(j, i)] };
            p = &p + &Polynomial::var(nv, offset + sym_index(n, i, j)).scale(c);
        }
    }
    p
}

/// `minimize Σ vᵢ  s.t.  (vᵢ − 1)σᵢ(X) = 0,  Tr(A_j X) = b_j,  vᵢ ≥ 0,  uᵀXu ≥ 0`
/// over `(u, X, v)`, `X` flattened as its upper triangle row by row.
pub fn min_rank_program(a_list: &[DMatrix<f64>], b: &[f64], alpha: f64) -> Result<SemialgebraicProgram> {
    if a_list.len() != b.len() {
        return Err(Error::Dimension(format!("{} constraint matrices, {} right-hand sides", a_list.len(), b.len())));
    }
    let Some(n) = a_list.first().map(|a| a.nrows()) else {
        return Err(Error::InvalidArgument("rank program needs at least one constraint".into()));
    };
    if a_list.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(Error::Dimension("constraint matrices must all be square of the same size".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrices".into()));
    }
    if n > MAX_RANK_DIM {
        return Err(Error::TooLarge(format!("rank program limited to {MAX_RANK_DIM}x{MAX_RANK_DIM} matrices, got {n}x{n}")));
    }
    let m = sym_len(n);
    let nv = 2 * n + m;
    let (u0, x0, v0) = (0, n, n + m);
    let mut variables = names("u", n);
    for i in 0..n {
        for j in i..n {
            variables.push(format!("X{}{}", i + 1, j + 1));
        }
    }
    variables.extend(names("v", n));
    let x_map: Vec<usize> = (x0..x0 + m).collect();

    let mut objective = Polynomial::zero(nv);
    for i in 0..n {
        objective = &objective + &Polynomial::var(nv, v0 + i);
    }
    let mut sap = SemialgebraicProgram::new(variables, objective, alpha)?;

    let mut ball = Polynomial::constant(nv, alpha);
    for i in 0..n {
        for j in i..n {
            let x = Polynomial::var(nv, x0 + sym_index(n, i, j));
            let w = if i == j { 1.0 } else { 2.0 };
            ball = &ball - &(&x * &x).scale(w);
        }
    }
    for k in (0..n).map(|i| u0 + i).chain((0..n).map(|i| v0 + i)) {
        let z = Polynomial::var(nv, k);
        ball = &ball - &(&z * &z);
    }
    sap.ball = Some(ball);

    let one = Polynomial::constant(nv, 1.0);
    for i in 0..n {
        let s = sigma_k::<f64>(n, i + 1)?.embed(nv, &x_map)?;
        let v = Polynomial::var(nv, v0 + i);
        sap.add_equality(&(&v - &one) * &s)?;
    }
    for (a, &bj) in a_list.iter().zip(b) {
        let t = trace_form(a, nv, x0);
        sap.add_equality(&t - &Polynomial::constant(nv, bj))?;
    }
    for i in 0..n {
        sap.add_inequality(Polynomial::var(nv, v0 + i))?;
    }
    let mut uxu = Polynomial::zero(nv);
    for i in 0..n {
        for j in i..n {
            let w = if i == j { 1.0 } else { 2.0 };
            let term = &(&Polynomial::var(nv, u0 + i) * &Polynomial::var(nv, u0 + j)) * &Polynomial::var(nv, x0 + sym_index(n, i, j));
            uxu = &uxu + &term.scale(w);
        }
    }
    sap.add_inequality(uxu)?;
    Ok(sap)
}

/// Point `(u, X, v)` of [`min_rank_program`] with `vᵢ = 1` exactly when `σᵢ(X) ≠ 0`.
pub fn min_rank_point(x: &DMatrix<f64>, u: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    let n = x.nrows();
    if u.len() != n {
        return Err(Error::Dimension(format!("u of length {} for a {n}x{n} matrix", u.len())));
    }
    let mut p = u.to_vec();
    for i in 0..n {
        for j in i..n {
            p.push(x[(i, j)]);
        }
    }
    let entries: Vec<f64> = p[n..].to_vec();
    for k in 1..=n {
        let s = sigma_k::<f64>(n, k)?.eval(&entries)?;
        p.push(if s.abs() > rank_tol { 1.0 } else { 0.0 });
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Putinar certificates as SDP rows

/// Which constraint a Gram block certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTag {
    /// `q₀`, dual to the moment matrix.
    Moment,
    /// Multiplier of the `k`-th entry of [`SemialgebraicProgram::constraints`].
    Inequality(usize),
}

/// A polynomial whose coefficients are affine in free SDP variables:
/// `base + Σ_u w_u · parts[u].1` with `w_u` the free variable `parts[u].0`.
#[derive(Debug, Clone)]
pub struct AffinePolynomial {
    pub base: Polynomial,
    pub parts: Vec<(usize, Polynomial)>,
}

impl AffinePolynomial {
    pub fn constant(p: Polynomial) -> Self {
        AffinePolynomial { base: p, parts: Vec::new() }
    }

    fn degree(&self) -> usize {
        self.parts.iter().map(|(_, p)| p.degree()).chain(std::iter::once(self.base.degree())).max().unwrap_or(0) as usize
    }
}

/// Blocks and rows added for one certificate.
#[derive(Debug, Clone)]
pub struct CertificateBlocks {
    pub first_row: usize,
    pub rows: usize,
    /// `(block index, tag, layout)` for every Gram block.
    pub blocks: Vec<(usize, BlockTag, MatrixLayout)>,
    /// Layout rows kept in each SDP block, see [`standard_monomials`].
    pub kept: Vec<Vec<usize>>,
    /// Linear functionals of `y` that the equality multipliers force to zero.
    pub equality_rows: Vec<Vec<(usize, f64)>>,
}

/// Rows of a Gram block over `basis(n, d)` that survive the equality constraints.
///
/// The products `m·h` that the equality rows force into the kernel of the block
/// are brought to echelon form with pivots on the largest monomials; the pivot
/// monomials are dropped and the rest returned, in increasing order. Restricting
/// the block to these rows gives the same feasible set without the forced kernel.
pub fn standard_monomials(n: usize, d: usize, g_degree: usize, equalities: &[Polynomial], caps: &[usize]) -> Result<Vec<usize>> {
    let rows = basis(n, d)?;
    let side = rows.len();
    let mut pivots: Vec<(usize, Vec<f64>)> = Vec::new();
    for (h, &cap) in equalities.iter().zip(caps) {
        let dh = h.degree() as usize;
        if dh > d || d + g_degree > cap {
            continue;
        }
        let top = (d - dh).min(cap - d - g_degree);
        for m in basis(n, top)?.entries() {
            let mut v = vec![0.0; side];
            for (a, &c) in h.terms() {
                v[rows.index_of(&m.times(a)).unwrap()] += c;
            }
            for (p, r) in &pivots {
                let f = v[*p];
                if f != 0.0 {
                    v.iter_mut().zip(r).for_each(|(x, y)| *x -= f * y);
                }
            }
            let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale <= 1e-9 {
                continue;
            }
            let p = (0..side).rev().find(|&i| v[i].abs() >= 1e-2 * scale).unwrap();
            let lead = v[p];
            v.iter_mut().for_each(|x| *x /= lead);
            v[p] = 1.0;
            for (_, r) in pivots.iter_mut() {
                let f = r[p];
                if f != 0.0 {
                    r.iter_mut().zip(&v).for_each(|(x, y)| *x -= f * y);
                }
            }
            pivots.push((p, v));
        }
    }
    let mut dropped = vec![false; side];
    for (p, _) in &pivots {
        dropped[*p] = true;
    }
    Ok((0..side).filter(|&i| !dropped[i]).collect())
}

/// Adds `target = q₀ + Σ g_k q_k + Σ h_j λ_j` over `basis(n, 2N)` to `sdp`.
pub fn add_putinar_certificate(
    sdp: &mut SdpProblem,
    n: usize,
    order: usize,
    inequalities: &[&Polynomial],
    equalities: &[Polynomial],
    target: &AffinePolynomial,
) -> Result<CertificateBlocks> {
    let top = 2 * order;
    if target.degree() > top {
        return Err(Error::DegreeOverflow { what: "objective".into(), order, needed: target.degree().div_ceil(2) });
    }
    let full = basis(n, top)?;
    let first_row = sdp.equalities.len();
    let mut rows = vec![LinearFunctional::new(); full.len()];
    let mut rhs = vec![0.0; full.len()];
    for (m, &c) in target.base.terms() {
        rhs[full.index_of(m).unwrap()] += c;
    }
    for (w, p) in &target.parts {
        for (m, &c) in p.terms() {
            rows[full.index_of(m).unwrap()].add_free(*w, -c);
        }
    }

    let mut equality_rows = Vec::new();
    let mut caps = Vec::with_capacity(equalities.len());
    for (j, h) in equalities.iter().enumerate() {
        let half = (h.degree() as usize).div_ceil(2);
        if half > order {
            return Err(Error::DegreeOverflow { what: format!("equality {j}"), order, needed: half });
        }
        let cap = 2 * (order - half);
        caps.push(cap);
        let mult = basis(n, cap)?;
        let w0 = sdp.add_free_vars(mult.len());
        for (k, mu) in mult.entries().iter().enumerate() {
            let mut functional = Vec::new();
            for (a, &c) in h.terms() {
                let idx = full.index_of(&mu.times(a)).unwrap();
                rows[idx].add_free(w0 + k, c);
                functional.push((idx, c));
            }
            equality_rows.push(functional);
        }
    }

    let mut blocks = Vec::new();
    let mut kept_rows = Vec::new();
    let mut gram = |g: &Polynomial, tag: BlockTag, what: String| -> Result<()> {
        let deg = g.degree() as usize;
        let half = deg.div_ceil(2);
        if half > order {
            return Err(Error::DegreeOverflow { what, order, needed: half });
        }
        let d = order - half;
        let layout = localizing_layout(g, n, d)?;
        let keep = standard_monomials(n, d, deg, equalities, &caps)?;
        if keep.is_empty() {
            return Err(Error::Infeasible(format!("{what}: the equality constraints generate the unit ideal")));
        }
        let blk = sdp.add_block(Block::psd(keep.len()));
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate().skip(a) {
                for &(k, c) in layout.cell(i, j) {
                    rows[k].add_entry(blk, a, b, c);
                }
            }
        }
        blocks.push((blk, tag, layout));
        kept_rows.push(keep);
        Ok(())
    };
    gram(&Polynomial::constant(n, 1.0), BlockTag::Moment, "moment matrix".into())?;
    for (k, g) in inequalities.iter().enumerate() {
        gram(g, BlockTag::Inequality(k), format!("inequality {k}"))?;
    }

    for (f, r) in rows.into_iter().zip(rhs) {
        sdp.add_equality(f, r);
    }
    Ok(CertificateBlocks { first_row, rows: full.len(), blocks, kept: kept_rows, equality_rows })
}

// ---------------------------------------------------------------------------
// Moment relaxation

/// Order-`N` relaxation of a [`SemialgebraicProgram`].
#[derive(Debug, Clone)]
pub struct RelaxationSdp {
    pub order: usize,
    pub nvars: usize,
    pub sdp: SdpProblem,
    /// Tag of every SDP block; block 0 is the moment matrix.
    pub block_tags: Vec<BlockTag>,
    pub layouts: Vec<MatrixLayout>,
    /// Functionals of `y` constrained to zero by the equality constraints.
    pub equality_rows: Vec<Vec<(usize, f64)>>,
    /// Length of the moment vector, `s(2N)`.
    pub y_dim: usize,
    /// Objective coefficients `f_α` over the moment vector.
    pub objective: Vec<f64>,
    /// Variables of the SDP are `x / scale`; layouts and equality rows refer to them.
    pub scale: f64,
    /// `scale^|α|` for every moment index.
    powers: Vec<f64>,
}

/// Copy of `sdp` with `Σ_k Tr X_k ≤ bound` over all of its blocks.
pub fn trace_bounded(sdp: &SdpProblem, bound: f64) -> SdpProblem {
    let mut out = sdp.clone();
    let blocks = out.blocks.len();
    let slack = out.add_block(Block::diagonal(1));
    let mut f = LinearFunctional::new();
    for k in 0..blocks {
        for i in 0..out.blocks[k].dim {
            f.add_entry(k, i, i, 1.0);
        }
    }
    f.add_entry(slack, 0, 0, 1.0);
    out.add_equality(f, bound);
    out
}

/// Feasibility measures of a moment vector for a [`RelaxationSdp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub y0_residual: f64,
    pub max_equality_residual: f64,
    /// Smallest eigenvalue of each moment / localizing matrix, by block.
    pub min_eigenvalues: Vec<f64>,
}

impl MomentCheck {
    pub fn feasible(&self, tol: f64) -> bool {
        self.y0_residual <= tol && self.max_equality_residual <= tol && self.min_eigenvalues.iter().all(|&e| e >= -tol)
    }
}

pub fn build_moment_relaxation(sap: &SemialgebraicProgram, order: usize) -> Result<RelaxationSdp> {
    let n = sap.nvars();
    if order == 0 {
        return Err(Error::InvalidArgument("relaxation order must be at least 1".into()));
    }
    if sap.objective.degree() as usize > 2 * order {
        return Err(Error::DegreeOverflow {
            what: "objective".into(),
            order,
            needed: (sap.objective.degree() as usize).div_ceil(2),
        });
    }
    // Work in x' = x / r so the ball becomes the unit ball; constraints are
    // rescaled to unit size. Both changes leave the relaxation unchanged.
    let scale = if sap.ball.is_some() { sap.alpha.sqrt().max(1.0) } else { 1.0 };
    let inner = |p: &Polynomial| normalized(&dilate(p, scale));
    let constraints: Vec<Polynomial> = sap.constraints().into_iter().map(inner).collect();
    let equalities: Vec<Polynomial> = sap.equalities.iter().map(inner).collect();
    let mut sdp = SdpProblem::new();
    let t = sdp.add_free_vars(1);
    let mut obj = LinearFunctional::new();
    obj.add_free(t, -1.0);
    sdp.objective = obj;
    let target = AffinePolynomial { base: dilate(&sap.objective, scale), parts: vec![(t, Polynomial::constant(n, -1.0))] };
    let cert = add_putinar_certificate(&mut sdp, n, order, &constraints.iter().collect::<Vec<_>>(), &equalities, &target)?;
    let y_dim = basis_size(n, 2 * order);
    let b = basis(n, 2 * order)?;
    let mut objective = vec![0.0; y_dim];
    for (m, &c) in sap.objective.terms() {
        objective[b.index_of(m).unwrap()] = c;
    }
    let powers = b.entries().iter().map(|m| scale.powi(m.degree() as i32)).collect();
    let (block_tags, layouts) = cert.blocks.into_iter().map(|(_, tag, l)| (tag, l)).unzip();
    Ok(RelaxationSdp {
        order,
        nvars: n,
        sdp,
        block_tags,
        layouts,
        equality_rows: cert.equality_rows,
        y_dim,
        objective,
        scale,
        powers,
    })
}

/// `p(r·x)`.
fn dilate(p: &Polynomial, r: f64) -> Polynomial {
    if r == 1.0 {
        return p.clone();
    }
    let mut out = Polynomial::zero(p.nvars());
    for (m, &c) in p.terms() {
        out.add_term(m.clone(), c * r.powi(m.degree() as i32));
    }
    out
}

fn normalized(p: &Polynomial) -> Polynomial {
    let top = p.terms().fold(0.0f64, |a, (_, c)| a.max(c.abs()));
    if top == 0.0 {
        p.clone()
    } else {
        p.scale(1.0 / top)
    }
}

/// The Putinar SOS program of order `N`; its optimal value is `−primal_obj`.
pub fn build_sos_dual(sap: &SemialgebraicProgram, order: usize) -> Result<SdpProblem> {
    Ok(build_moment_relaxation(sap, order)?.sdp)
}

impl RelaxationSdp {
    /// `y_α = −λ_α` from the multipliers of the coefficient-matching rows.
    pub fn moments_from(&self, sol: &SdpSolution) -> MomentVector {
        let values = sol.dual[..self.y_dim].iter().zip(&self.powers).map(|(l, p)| -l * p).collect();
        MomentVector { n: self.nvars, order: 2 * self.order, values }
    }

    /// Moments of the scaled variables the layouts are written in.
    pub fn scaled_values(&self, y: &MomentVector) -> Result<Vec<f64>> {
        if y.n != self.nvars || y.values.len() < self.y_dim {
            return Err(Error::Dimension(format!("moment vector ({} vars, order {}) for this relaxation", y.n, y.order)));
        }
        Ok(y.values[..self.y_dim].iter().zip(&self.powers).map(|(v, p)| v / p).collect())
    }

    /// The SOS program with `Σ_k Tr X_k ≤ bound` over the Gram blocks.
    ///
    /// Its value is a lower bound on `l_N` that increases to `l_N` with the bound;
    /// on the moment side the blocks may become indefinite by the multiplier of
    /// the new row. The trace is measured in the scaled variables.
    pub fn with_trace_bound(&self, bound: f64) -> SdpProblem {
        trace_bounded(&self.sdp, bound)
    }

    pub fn objective_value(&self, y: &MomentVector) -> f64 {
        self.objective.iter().zip(&y.values).map(|(c, v)| c * v).sum()
    }

    /// Moment or localizing matrix of one block, in scaled variables.
    pub fn block_matrix(&self, y: &MomentVector, block: usize) -> Result<DMatrix<f64>> {
        assemble_values(&self.scaled_values(y)?, &self.layouts[block])
    }

    pub fn check_moments(&self, y: &MomentVector) -> Result<MomentCheck> {
        let v = self.scaled_values(y)?;
        let y0_residual = (v[0] - 1.0).abs();
        let max_equality_residual = self
            .equality_rows
            .iter()
            .map(|r| r.iter().map(|&(k, c)| c * v[k]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let min_eigenvalues = (0..self.layouts.len())
            .map(|k| self.block_matrix(y, k).map(|m| m.symmetric_eigenvalues().min()))
            .collect::<Result<_>>()?;
        Ok(MomentCheck { y0_residual, max_equality_residual, min_eigenvalues })
    }
}

/// Bound `l_N` and SOS value from one solve of the relaxation SDP.
#[derive(Debug, Clone)]
pub struct RelaxationSolve {
    pub solution: SdpSolution,
    pub moments: MomentVector,
    pub moment_value: f64,
    pub sos_value: f64,
}

pub fn solve_relaxation_sdp(relax: &RelaxationSdp, cfg: &SolverConfig) -> Result<RelaxationSolve> {
    solve_variant(relax, &relax.sdp, cfg)
}

/// Solves `sdp`, a copy of `relax.sdp` with extra blocks or rows appended.
pub fn solve_variant(relax: &RelaxationSdp, sdp: &SdpProblem, cfg: &SolverConfig) -> Result<RelaxationSolve> {
    let solution = solve(sdp, cfg)?;
    let moments = relax.moments_from(&solution);
    Ok(RelaxationSolve {
        moment_value: -solution.dual_obj,
        sos_value: -solution.primal_obj,
        moments,
        solution,
    })
}

// ---------------------------------------------------------------------------
// Single-polynomial SOS feasibility

/// Gram representation `p = z(x)ᵀ G z(x)` over a Newton-pruned monomial vector `z`.
#[derive(Debug, Clone)]
pub struct SosGram {
    pub monomials: Vec<Monomial>,
    pub gram: DMatrix<f64>,
    pub status: SolveStatus,
}

/// Monomials of `basis(n, deg p / 2)` lying in half the Newton polytope of `p`.
pub fn newton_basis(p: &Polynomial, cfg: &SolverConfig) -> Result<Vec<Monomial>> {
    let half = p.degree() as usize / 2;
    let poly = NewtonPolytope::of(p)?;
    let cand: MonomialBasis = basis(p.nvars(), half)?;
    let mut out = Vec::new();
    for m in cand.entries() {
        if poly.half_contains(m, cfg)? {
            out.push(m.clone());
        }
    }
    Ok(out)
}

/// Searches for a PSD Gram matrix of `p` (minimum trace).
pub fn sos_feasibility(p: &Polynomial, cfg: &SolverConfig) -> Result<SosGram> {
    if p.is_zero() {
        return Err(Error::InvalidArgument("zero polynomial".into()));
    }
    if p.degree() % 2 == 1 {
        return Err(Error::Infeasible("odd-degree polynomial is not a sum of squares".into()));
    }
    let monomials = newton_basis(p, cfg)?;
    let s = monomials.len();
    let mut rows: std::collections::BTreeMap<Monomial, LinearFunctional> = std::collections::BTreeMap::new();
    let mut sdp = SdpProblem::new();
    let blk = sdp.add_block(Block::psd(s));
    for i in 0..s {
        for j in i..s {
            rows.entry(monomials[i].times(&monomials[j])).or_default().add_entry(blk, i, j, 1.0);
        }
    }
    for (m, _) in p.terms() {
        if !rows.contains_key(m) {
            return Err(Error::Infeasible(format!("term {m:?} outside the Gram support")));
        }
    }
    for (m, f) in rows {
        let c = p.coef(&m);
        sdp.add_equality(f, c);
    }
    let mut obj = LinearFunctional::new();
    for i in 0..s {
        obj.add_entry(blk, i, i, 1.0);
    }
    sdp.objective = obj;
    let sol = solve(&sdp, cfg)?;
    if sol.status == SolveStatus::InfeasibleSuspected {
        return Err(Error::Infeasible("no PSD Gram matrix found".into()));
    }
    Ok(SosGram { monomials, gram: sol.primal[blk].clone(), status: sol.status })
}

// ---------------------------------------------------------------------------
// Convex envelope of the cardinality function

/// `∫_{[0,1]ⁿ} x^α dx = Π 1/(αᵢ + 1)`.
pub fn box_moment(m: &Monomial) -> f64 {
    m.exponents().iter().map(|&e| 1.0 / (e as f64 + 1.0)).product()
}

#[derive(Debug, Clone)]
pub struct EnvelopeOptions {
    /// Ball radius for the `(x, v)` certificate; defaults to `2n + 1`.
    pub alpha: Option<f64>,
    /// Optional certified upper bound `t − p(x) ≥ 0` on `K`.
    pub upper_bound: Option<f64>,
    /// Skip the `Ax ≥ b` rows (the ℓ₁ special case).
    pub drop_rows: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions { alpha: None, upper_bound: None, drop_rows: false }
    }
}

/// SDP fitting a convex polynomial underestimator of `Card(x)` on `{Ax ≥ b} ∩ [0,1]ⁿ`.
#[derive(Debug, Clone)]
pub struct EnvelopeProgram {
    pub degree: usize,
    pub n: usize,
    pub order: usize,
    /// Monomials of `p`; coefficient `k` is free SDP variable `k`.
    pub unknowns: Vec<Monomial>,
    pub sdp: SdpProblem,
    /// The set `K` over `(x, v)` on which `Σ vᵢ − p(x) ≥ 0` is certified.
    pub domain: SemialgebraicProgram,
}

/// Fitted envelope and solver outcome.
#[derive(Debug, Clone)]
pub struct EnvelopeFit {
    pub p: Polynomial,
    pub integral: f64,
    pub status: SolveStatus,
    pub solution: SdpSolution,
}

pub fn envelope_program(a: &[Vec<f64>], b: &[f64], degree: usize, order: usize, opts: &EnvelopeOptions) -> Result<EnvelopeProgram> {
    let n = check_rows(a, b)?;
    if n == 0 {
        return Err(Error::InvalidArgument("envelope needs at least one variable".into()));
    }
    if degree == 0 {
        return Err(Error::InvalidArgument("envelope degree must be at least 1".into()));
    }
    if degree > 2 * order {
        return Err(Error::DegreeOverflow { what: format!("envelope of degree {degree}"), order, needed: degree.div_ceil(2) });
    }
    let alpha = opts.alpha.unwrap_or(2.0 * n as f64 + 1.0);
    let mut domain = if opts.drop_rows { card_program(n, &[], &[], alpha)? } else { card_program(n, a, b, alpha)? };
    let nv = 2 * n;
    for i in 0..n {
        let x = Polynomial::var(nv, i);
        domain.add_inequality(x.clone())?;
        domain.add_inequality(&Polynomial::constant(nv, 1.0) - &x)?;
    }

    let mut sdp = SdpProblem::new();
    let unknowns: Vec<Monomial> = basis(n, degree)?.entries().to_vec();
    sdp.add_free_vars(unknowns.len());
    let mut obj = LinearFunctional::new();
    for (k, m) in unknowns.iter().enumerate() {
        obj.add_free(k, -box_moment(m));
    }
    sdp.objective = obj;

    let x_map: Vec<usize> = (0..n).collect();
    let embedded: Vec<Polynomial> =
        unknowns.iter().map(|m| Polynomial::term(m.clone(), 1.0).embed(nv, &x_map)).collect::<Result<_>>()?;

    // Σ vᵢ − p(x) on K
    let sum_v = domain.objective.clone();
    let under = AffinePolynomial { base: sum_v, parts: embedded.iter().enumerate().map(|(k, e)| (k, -e)).collect() };
    add_putinar_certificate(&mut sdp, nv, order, &domain.constraints(), &domain.equalities, &under)?;

    if let Some(t) = opts.upper_bound {
        let over = AffinePolynomial { base: Polynomial::constant(nv, t), parts: embedded.iter().enumerate().map(|(k, e)| (k, e.clone())).collect() };
        add_putinar_certificate(&mut sdp, nv, order, &domain.constraints(), &domain.equalities, &over)?;
    }

    if degree >= 2 {
        // zᵀ∇²p(x)z over (x, z) with x in the unit box and ‖z‖² = 1
        let nz = 2 * n;
        let mut parts = Vec::new();
        for (k, m) in unknowns.iter().enumerate() {
            let mono = Polynomial::term(m.clone(), 1.0).embed(nz, &x_map)?;
            let mut h = Polynomial::zero(nz);
            for i in 0..n {
                for j in 0..n {
                    let zz = &Polynomial::var(nz, n + i) * &Polynomial::var(nz, n + j);
                    h = &h + &(&mono.derivative(i).derivative(j) * &zz);
                }
            }
            if !h.is_zero() {
                parts.push((k, h));
            }
        }
        let mut sphere = Polynomial::constant(nz, 1.0);
        for i in 0..n {
            let z = Polynomial::var(nz, n + i);
            sphere = &sphere - &(&z * &z);
        }
        let mut cons = Vec::new();
        for i in 0..n {
            let x = Polynomial::var(nz, i);
            cons.push(x.clone());
            cons.push(&Polynomial::constant(nz, 1.0) - &x);
        }
        cons.push(sphere.clone());
        cons.push(-&sphere);
        let refs: Vec<&Polynomial> = cons.iter().collect();
        let convex = AffinePolynomial { base: Polynomial::zero(nz), parts };
        add_putinar_certificate(&mut sdp, nz, order, &refs, &[], &convex)?;
    }

    Ok(EnvelopeProgram { degree, n, order, unknowns, sdp, domain })
}

impl EnvelopeProgram {
    /// Solves the fitting SDP. A solve that stalls is repeated with the Gram
    /// traces bounded by [`TRACE_BOUNDS`](crate::certify::TRACE_BOUNDS) in
    /// turn, stopping at the first that converges.
    pub fn fit(&self, cfg: &SolverConfig) -> Result<EnvelopeFit> {
        let mut solution = solve(&self.sdp, cfg)?;
        if !matches!(solution.status, SolveStatus::Optimal | SolveStatus::InfeasibleSuspected) {
            for &bound in &crate::certify::TRACE_BOUNDS {
                let s = solve(&trace_bounded(&self.sdp, bound), cfg)?;
                if s.status == SolveStatus::Optimal {
                    solution = s;
                    break;
                }
            }
        }
        let p = Polynomial::from_terms(self.n, self.unknowns.iter().cloned().zip(solution.free.iter().copied()))?;
        Ok(EnvelopeFit { integral: -solution.primal_obj, status: solution.status, p, solution })
    }
}

/// Sampled check of an envelope: `p ≤ Card` on feasible points and `∇²p ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeValidation {
    pub samples: usize,
    /// `max (p(x) − Card(x))` over the samples.
    pub max_excess: f64,
    pub min_hessian_eigenvalue: f64,
}

/// Draws points of `{Ax ≥ b} ∩ [0,1]ⁿ`, each coordinate zero with probability ½
/// and uniform otherwise, and evaluates `p` and its Hessian there.
///
/// Rejection sampling gives up after `1000 · samples` draws; `samples` in the
/// result counts the accepted points.
pub fn validate_envelope(p: &Polynomial, a: &[Vec<f64>], b: &[f64], samples: usize, seed: u64) -> Result<EnvelopeValidation> {
    let n = p.nvars();
    if !a.is_empty() && check_rows(a, b)? != n {
        return Err(Error::Dimension(format!("rows of length {}, envelope in {n} variables", a[0].len())));
    }
    let hess: Vec<Vec<Polynomial>> = (0..n).map(|i| (0..n).map(|j| p.derivative(i).derivative(j)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = EnvelopeValidation { samples: 0, max_excess: f64::NEG_INFINITY, min_hessian_eigenvalue: f64::INFINITY };
    for _ in 0..samples.saturating_mul(1000) {
        if out.samples == samples {
            break;
        }
        let x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen::<f64>() }).collect();
        let feasible = a.iter().zip(b).all(|(row, &bj)| row.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>() >= bj);
        if !feasible {
            continue;
        }
        out.samples += 1;
        let card = x.iter().filter(|&&v| v != 0.0).count() as f64;
        out.max_excess = out.max_excess.max(p.eval(&x)? - card);
        let h = DMatrix::from_fn(n, n, |i, j| hess[i][j].eval(&x).unwrap_or(f64::NAN));
        out.min_hessian_eigenvalue = out.min_hessian_eigenvalue.min(h.symmetric_eigenvalues().min());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Problem files

/// Problem input document, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProblemInput {
    Mincard {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    Minrank {
        #[serde(rename = "A_list")]
        a_list: Vec<Vec<Vec<f64>>>,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    Envelope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        degree: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
}

impl ProblemInput {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Converts nested rows to square matrices, rejecting ragged or asymmetric input.
pub fn matrices_from_rows(a_list: &[Vec<Vec<f64>>]) -> Result<Vec<DMatrix<f64>>> {
    a_list
        .iter()
        .map(|rows| {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Dimension("constraint matrix is not square".into()));
            }
            let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            if (&m - m.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidArgument("constraint matrix is not symmetric".into()));
            }
            Ok(m)
        })
        .collect()
}
