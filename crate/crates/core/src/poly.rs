//! Sparse multivariate polynomials over `f64` or exact rationals.
//!
//! Monomials are ordered graded-lexicographically: total degree first, then
//! the exponent of `x₁`, then `x₂`, and so on, with larger exponents of earlier
//! variables coming first. So for two variables the order is
//! `1, x₁, x₂, x₁², x₁x₂, x₂², …`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use momentcard_sdp::{solve_lp, Bounds, LpProblem, SolveStatus, SolverConfig};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Rational = num_rational::Rational64;

/// Coefficient ring of a [`Polynomial`].
pub trait Coefficient:
    Clone + PartialEq + fmt::Debug + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn to_f64(&self) -> f64;
}

impl Coefficient for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coefficient for Rational {
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    pub fn one(n: usize) -> Self {
        Monomial { exps: vec![0; n] }
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut exps = vec![0; n];
        exps[i] = 1;
        Monomial { exps }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    /// Product of two monomials over the same variables.
    pub fn times(&self, other: &Monomial) -> Monomial {
        assert_eq!(self.nvars(), other.nvars(), "monomials over different variable counts");
        Monomial { exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect() }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exps.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `Less` means `a` is listed before `b` in a graded-lex basis.
pub fn graded_lex_compare(a: &Monomial, b: &Monomial) -> Result<Ordering> {
    if a.nvars() != b.nvars() {
        return Err(Error::Dimension(format!("monomials in {} and {} variables", a.nvars(), b.nvars())));
    }
    Ok(a.cmp(b))
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of monomials of degree at most `m` in `n` variables.
pub fn basis_size(n: usize, m: usize) -> usize {
    binomial(n + m, m)
}

/// All exponent vectors of total degree exactly `d`, in graded-lex order.
fn exponents_of_degree(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return if d == 0 { vec![vec![]] } else { vec![] };
    }
    if n == 1 {
        return vec![vec![d]];
    }
    let mut out = Vec::new();
    for e0 in (0..=d).rev() {
        for mut rest in exponents_of_degree(n - 1, d - e0) {
            rest.insert(0, e0);
            out.push(rest);
        }
    }
    out
}

/// Graded-lex ordered monomials up to a maximum degree.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    n: usize,
    m: usize,
    entries: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl MonomialBasis {
    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &Monomial {
        &self.entries[i]
    }

    pub fn index_of(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }
}

pub fn basis(n: usize, m: usize) -> Result<MonomialBasis> {
    if n == 0 {
        return Err(Error::InvalidArgument("basis needs at least one variable".into()));
    }
    let mut entries = Vec::with_capacity(basis_size(n, m));
    for d in 0..=m as u32 {
        entries.extend(exponents_of_degree(n, d).into_iter().map(Monomial::new));
    }
    let index = entries.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
    Ok(MonomialBasis { n, m, entries, index })
}

/// Sparse polynomial with no stored zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T: Coefficient = f64> {
    n: usize,
    terms: BTreeMap<Monomial, T>,
}

impl<T: Coefficient> Polynomial<T> {
    pub fn zero(n: usize) -> Self {
        Polynomial { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: T) -> Self {
        Self::term(Monomial::one(n), c)
    }

    pub fn var(n: usize, i: usize) -> Self {
        Self::term(Monomial::var(n, i), T::one())
    }

    pub fn term(m: Monomial, c: T) -> Self {
        let mut p = Polynomial::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Monomial, T)>) -> Result<Self> {
        let mut p = Polynomial::zero(n);
        for (m, c) in terms {
            if m.nvars() != n {
                return Err(Error::Dimension(format!("term in {} variables for a polynomial in {}", m.nvars(), n)));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &T)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coef(&self, m: &Monomial) -> T {
        self.terms.get(m).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: T) {
        debug_assert_eq!(m.nvars(), self.n);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(cur) => {
                let sum = cur.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *cur = sum;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn scale(&self, c: T) -> Self {
        let mut out = Polynomial::zero(self.n);
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.checked_add(&-other)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = Polynomial::zero(self.n);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.times(mb), ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Polynomial::constant(self.n, T::one()), |acc, _| &acc * self)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point of length {} for a polynomial in {} variables", x.len(), self.n)));
        }
        Ok(self.terms.iter().map(|(m, c)| c.to_f64() * m.eval(x)).sum())
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Polynomial::zero(self.n);
        for (m, c) in &self.terms {
            let e = m.exps[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.exps.clone();
            exps[i] -= 1;
            let factor = (0..e).fold(T::zero(), |acc, _| acc + T::one());
            out.add_term(Monomial::new(exps), c.clone() * factor);
        }
        out
    }

    /// Re-expresses the polynomial in `n_new` variables, variable `i` becoming `map[i]`.
    pub fn embed(&self, n_new: usize, map: &[usize]) -> Result<Self> {
        if map.len() != self.n || map.iter().any(|&j| j >= n_new) {
            return Err(Error::Dimension(format!("variable map {map:?} into {n_new} variables")));
        }
        let mut out = Polynomial::zero(n_new);
        for (m, c) in &self.terms {
            let mut exps = vec![0; n_new];
            for (i, &e) in m.exps.iter().enumerate() {
                exps[map[i]] += e;
            }
            out.add_term(Monomial::new(exps), c.clone());
        }
        Ok(out)
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        let mut out = Polynomial::zero(self.n);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.to_f64());
        }
        out
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("polynomials in {} and {} variables", self.n, other.n)));
        }
        Ok(())
    }
}

pub fn poly_add<T: Coefficient>(a: &Polynomial<T>, b: &Polynomial<T>) -> Result<Polynomial<T>> {
    a.checked_add(b)
}

pub fn poly_mul<T: Coefficient>(a: &Polynomial<T>, b: &Polynomial<T>) -> Result<Polynomial<T>> {
    a.checked_mul(b)
}

pub fn poly_eval<T: Coefficient>(p: &Polynomial<T>, x: &[f64]) -> Result<f64> {
    p.eval(x)
}

// The operator forms panic on a variable-count mismatch; use the checked methods
// when the operands come from untrusted input.

impl<T: Coefficient> Add for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: Self) -> Polynomial<T> {
        self.checked_add(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<T: Coefficient> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: Self) -> Polynomial<T> {
        self.checked_sub(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<T: Coefficient> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: Self) -> Polynomial<T> {
        self.checked_mul(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<T: Coefficient> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        Polynomial { n: self.n, terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

impl<T: Coefficient> Add for Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: Self) -> Polynomial<T> {
        &self + &rhs
    }
}

impl<T: Coefficient> Sub for Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: Self) -> Polynomial<T> {
        &self - &rhs
    }
}

impl<T: Coefficient> Mul for Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: Self) -> Polynomial<T> {
        &self * &rhs
    }
}

impl<T: Coefficient> fmt::Display for Polynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c:?}")?;
            for (i, &e) in m.exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Symmetric matrices as polynomials in their upper-triangular entries

/// Position of `X_ij` (0-based, any order of `i`, `j`) among the `n(n+1)/2`
/// upper-triangular entries listed row by row.
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row r holds n − r entries
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Determinant of the submatrix of a symbolic symmetric `n × n` matrix on rows and columns `idx` (0-based).
pub fn principal_minor<T: Coefficient>(n: usize, idx: &[usize]) -> Result<Polynomial<T>> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument("principal minor of an empty index set".into()));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("index {bad} out of range for a {n}x{n} matrix")));
    }
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != idx.len() {
        return Err(Error::InvalidArgument(format!("repeated index in {idx:?}")));
    }
    let nv = n * (n + 1) / 2;
    let k = idx.len();
    let mut det = Polynomial::zero(nv);
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        let mut exps = vec![0u32; nv];
        for (a, &b) in perm.iter().enumerate() {
            exps[sym_index(n, idx[a], idx[b])] += 1;
        }
        let sign = if inversions(&perm) % 2 == 0 { T::one() } else { -T::one() };
        det.add_term(Monomial::new(exps), sign);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(det)
}

fn inversions(p: &[usize]) -> usize {
    let mut c = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                c += 1;
            }
        }
    }
    c
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else { break };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

/// `σ_k(X)`: the sum of all `k × k` principal minors of a symbolic symmetric matrix.
pub fn sigma_k<T: Coefficient>(n: usize, k: usize) -> Result<Polynomial<T>> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("sigma_{k} undefined for {n}x{n} matrices")));
    }
    let mut out = Polynomial::zero(n * (n + 1) / 2);
    for s in subsets(n, k) {
        out = &out + &principal_minor(n, &s)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Newton polytope

/// Convex hull of the support of a polynomial, kept as its generating exponents.
#[derive(Debug, Clone)]
pub struct NewtonPolytope {
    points: Vec<Vec<u32>>,
}

impl NewtonPolytope {
    pub fn of<T: Coefficient>(p: &Polynomial<T>) -> Result<Self> {
        if p.is_zero() {
            return Err(Error::InvalidArgument("Newton polytope of the zero polynomial".into()));
        }
        Ok(NewtonPolytope { points: p.terms().map(|(m, _)| m.exps.clone()).collect() })
    }

    pub fn points(&self) -> &[Vec<u32>] {
        &self.points
    }

    /// Whether `2β` lies in the hull, i.e. `β ∈ ½·C(p)`.
    ///
    /// Decided by a phase-one LP: minimize the total deviation of
    /// `Σ λ_k α_k` from `2β` over convex weights `λ`.
    pub fn half_contains(&self, beta: &Monomial, cfg: &SolverConfig) -> Result<bool> {
        let n = beta.nvars();
        if self.points.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension(format!("monomial in {n} variables against a polytope in {}", self.points[0].len())));
        }
        let target: Vec<f64> = beta.exps.iter().map(|&e| 2.0 * e as f64).collect();
        if self.points.iter().any(|p| p.iter().zip(&target).all(|(&a, &t)| a as f64 == t)) {
            return Ok(true);
        }
        let k = self.points.len();
        // variables: λ (k), deviation plus (n), deviation minus (n)
        let nv = k + 2 * n;
        let mut c = vec![0.0; nv];
        for v in c.iter_mut().skip(k) {
            *v = 1.0;
        }
        let mut a_eq = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut row = vec![0.0; nv];
            for (j, p) in self.points.iter().enumerate() {
                row[j] = p[i] as f64;
            }
            row[k + i] = 1.0;
            row[k + n + i] = -1.0;
            a_eq.push(row);
        }
        let mut sum = vec![0.0; nv];
        for v in sum.iter_mut().take(k) {
            *v = 1.0;
        }
        a_eq.push(sum);
        let mut b_eq = target.clone();
        b_eq.push(1.0);
        let lp = LpProblem { c, a_eq, b_eq, bounds: vec![Bounds::NONNEG; nv] };
        let sol = solve_lp(&lp, cfg)?;
        if sol.status != SolveStatus::Optimal {
            return Err(Error::SolveFailed(format!("Newton polytope membership LP ended with {:?}", sol.status)));
        }
        let scale = 1.0 + target.iter().map(|t| t.abs()).sum::<f64>();
        Ok(sol.objective <= 1e-6 * scale)
    }
}

pub fn half_newton_membership<T: Coefficient>(p: &Polynomial<T>, beta: &Monomial) -> Result<bool> {
    NewtonPolytope::of(p)?.half_contains(beta, &SolverConfig::default())
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub exp: Vec<u32>,
    pub coef: f64,
}

/// `{"vars": [...], "terms": [{"exp": [...], "coef": ...}, ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialDoc {
    pub vars: Vec<String>,
    pub terms: Vec<TermDoc>,
}

impl PolynomialDoc {
    pub fn new(vars: &[String], p: &Polynomial<f64>) -> Result<Self> {
        if vars.len() != p.nvars() {
            return Err(Error::Dimension(format!("{} names for {} variables", vars.len(), p.nvars())));
        }
        let terms = p.terms().map(|(m, &c)| TermDoc { exp: m.exps.clone(), coef: c }).collect();
        Ok(PolynomialDoc { vars: vars.to_vec(), terms })
    }

    pub fn to_polynomial(&self) -> Result<Polynomial<f64>> {
        Polynomial::from_terms(self.vars.len(), self.terms.iter().map(|t| (Monomial::new(t.exp.clone()), t.coef)))
    }
}

pub fn polynomial_to_json(vars: &[String], p: &Polynomial<f64>) -> Result<String> {
    Ok(serde_json::to_string(&PolynomialDoc::new(vars, p)?)?)
}

pub fn polynomial_from_json(text: &str) -> Result<(Vec<String>, Polynomial<f64>)> {
    let doc: PolynomialDoc = serde_json::from_str(text)?;
    let p = doc.to_polynomial()?;
    Ok((doc.vars, p))
}
