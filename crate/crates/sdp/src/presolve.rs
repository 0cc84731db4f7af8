//! Gaussian elimination of free variables.
//!
//! Each free variable is solved for from one equality row and substituted
//! into the other rows and the objective; the pivot row is then removed.
//! The remaining problem has only conic variables, so the interior-point
//! iteration works with a positive definite Schur complement. The recorded
//! steps are replayed backwards to recover free-variable values and the
//! multipliers of eliminated rows.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::problem::SdpProblem;

pub(crate) type EntryKey = (usize, usize, usize);

#[derive(Debug, Clone, Default)]
pub(crate) struct SparseRow {
    pub entries: BTreeMap<EntryKey, f64>,
    pub free: BTreeMap<usize, f64>,
    pub rhs: f64,
}

impl SparseRow {
    fn eval_entries(&self, x: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|(&(b, i, j), &v)| if i == j { v * x[b][(i, j)] } else { 2.0 * v * x[b][(i, j)] })
            .sum()
    }

    fn max_abs(&self) -> f64 {
        self.entries
            .values()
            .chain(self.free.values())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Adds `scale * src` into `dst`, dropping coefficients that cancel.
fn axpy_map<K: Ord + Copy>(dst: &mut BTreeMap<K, f64>, src: &BTreeMap<K, f64>, scale: f64, mut on_remove: impl FnMut(K), mut on_insert: impl FnMut(K)) {
    for (&k, &v) in src {
        let delta = scale * v;
        match dst.get_mut(&k) {
            Some(cur) => {
                let old = *cur;
                let new = old + delta;
                if new.abs() <= 1e-14 * old.abs().max(delta.abs()) {
                    dst.remove(&k);
                    on_remove(k);
                } else {
                    *cur = new;
                }
            }
            None => {
                if delta != 0.0 {
                    dst.insert(k, delta);
                    on_insert(k);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Step {
    var: usize,
    pivot_row: usize,
    /// Pivot row as it stood when the variable was eliminated.
    definition: SparseRow,
    /// Rows updated as `row_i -= m_i * pivot_row`.
    updated: Vec<(usize, f64)>,
    /// Objective updated as `obj -= mu * pivot_row`.
    objective_multiplier: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Presolved {
    pub rows: Vec<SparseRow>,
    /// Original index of each surviving row.
    pub kept: Vec<usize>,
    /// Objective over block entries after substitution.
    pub objective: BTreeMap<EntryKey, f64>,
    pub objective_constant: f64,
    steps: Vec<Step>,
    /// Free variables that ended up in no row; fixed at zero.
    redundant: Vec<usize>,
    /// Rows that became identically zero and were dropped.
    dropped: Vec<usize>,
    num_rows: usize,
    num_free: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum PresolveOutcome {
    Ready(Box<Presolved>),
    /// A zero row with nonzero right-hand side, or an unbounded free direction.
    Infeasible(String),
}

pub(crate) fn presolve(problem: &SdpProblem) -> PresolveOutcome {
    let mut rows: Vec<SparseRow> = problem
        .equalities
        .iter()
        .map(|eq| {
            let f = eq.functional.normalized();
            SparseRow {
                entries: f.entries.iter().map(|e| ((e.block, e.row, e.col), e.value)).collect(),
                free: f.free.iter().copied().collect(),
                rhs: eq.rhs,
            }
        })
        .collect();
    let obj_norm = problem.objective.normalized();
    let mut obj_entries: BTreeMap<EntryKey, f64> =
        obj_norm.entries.iter().map(|e| ((e.block, e.row, e.col), e.value)).collect();
    let mut obj_free: BTreeMap<usize, f64> = obj_norm.free.iter().copied().collect();
    let mut constant = 0.0;

    let nfree = problem.free_vars;
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nfree];
    for (r, row) in rows.iter().enumerate() {
        for &k in row.free.keys() {
            col_rows[k].insert(r);
        }
    }
    let mut active = vec![true; rows.len()];
    let mut done = vec![false; nfree];
    let mut steps = Vec::new();
    let mut redundant = Vec::new();

    loop {
        // Sparsest remaining column first.
        let next = (0..nfree)
            .filter(|&k| !done[k] && !col_rows[k].is_empty())
            .min_by_key(|&k| (col_rows[k].len(), k));
        let Some(k) = next else { break };

        let col_max = col_rows[k]
            .iter()
            .map(|&r| rows[r].free[&k].abs())
            .fold(0.0f64, f64::max);
        let pivot = *col_rows[k]
            .iter()
            .filter(|&&r| rows[r].free[&k].abs() >= 0.1 * col_max)
            .min_by_key(|&&r| (rows[r].free.len(), rows[r].entries.len(), r))
            .expect("column has a row above threshold");

        let definition = rows[pivot].clone();
        let pivot_coef = definition.free[&k];
        let targets: Vec<usize> = col_rows[k].iter().copied().filter(|&r| r != pivot).collect();
        let mut updated = Vec::with_capacity(targets.len());
        for r in targets {
            let m = rows[r].free[&k] / pivot_coef;
            let row = &mut rows[r];
            axpy_map(&mut row.entries, &definition.entries, -m, |_| {}, |_| {});
            let mut removed = Vec::new();
            let mut inserted = Vec::new();
            axpy_map(&mut row.free, &definition.free, -m, |c| removed.push(c), |c| inserted.push(c));
            // The eliminated variable cancels by construction.
            row.free.remove(&k);
            row.rhs -= m * definition.rhs;
            for c in removed {
                col_rows[c].remove(&r);
            }
            for c in inserted {
                col_rows[c].insert(r);
            }
            col_rows[k].remove(&r);
            updated.push((r, m));
        }
        let mu = obj_free.get(&k).copied().unwrap_or(0.0) / pivot_coef;
        if mu != 0.0 {
            axpy_map(&mut obj_entries, &definition.entries, -mu, |_| {}, |_| {});
            axpy_map(&mut obj_free, &definition.free, -mu, |_| {}, |_| {});
            obj_free.remove(&k);
            constant += mu * definition.rhs;
        }
        for &c in definition.free.keys() {
            col_rows[c].remove(&pivot);
        }
        active[pivot] = false;
        done[k] = true;
        steps.push(Step { var: k, pivot_row: pivot, definition, updated, objective_multiplier: mu });
    }

    let obj_scale = 1.0 + obj_free.values().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..nfree {
        if !done[k] {
            let c = obj_free.get(&k).copied().unwrap_or(0.0);
            if c.abs() > 1e-12 * obj_scale {
                return PresolveOutcome::Infeasible(format!(
                    "free variable {k} has objective weight {c:e} but appears in no remaining constraint"
                ));
            }
            redundant.push(k);
        }
    }

    let mut kept = Vec::new();
    let mut kept_rows = Vec::new();
    let mut dropped = Vec::new();
    let rhs_scale = 1.0 + rows.iter().fold(0.0f64, |m, r| m.max(r.rhs.abs()));
    for (r, row) in rows.into_iter().enumerate() {
        if !active[r] {
            continue;
        }
        debug_assert!(row.free.is_empty());
        if row.entries.is_empty() || row.max_abs() <= 1e-14 {
            if row.rhs.abs() > 1e-10 * rhs_scale {
                return PresolveOutcome::Infeasible(format!(
                    "equality {r} reduces to 0 = {:e}",
                    row.rhs
                ));
            }
            dropped.push(r);
            continue;
        }
        kept.push(r);
        kept_rows.push(row);
    }

    PresolveOutcome::Ready(Box::new(Presolved {
        rows: kept_rows,
        kept,
        objective: obj_entries,
        objective_constant: constant,
        steps,
        redundant,
        dropped,
        num_rows: problem.equalities.len(),
        num_free: nfree,
    }))
}

impl Presolved {
    /// Free-variable values implied by the block values `x`.
    pub fn recover_free(&self, x: &[DMatrix<f64>]) -> Vec<f64> {
        let mut w = vec![0.0; self.num_free];
        for &k in &self.redundant {
            w[k] = 0.0;
        }
        for step in self.steps.iter().rev() {
            let def = &step.definition;
            let mut acc = def.rhs - def.eval_entries(x);
            for (&c, &v) in &def.free {
                if c != step.var {
                    acc -= v * w[c];
                }
            }
            w[step.var] = acc / def.free[&step.var];
        }
        w
    }

    /// Multipliers for every original row given those of the kept rows.
    pub fn recover_dual(&self, reduced: &[f64]) -> Vec<f64> {
        let mut lambda = vec![0.0; self.num_rows];
        for (&r, &v) in self.kept.iter().zip(reduced) {
            lambda[r] = v;
        }
        for &r in &self.dropped {
            lambda[r] = 0.0;
        }
        for step in self.steps.iter().rev() {
            let mut v = step.objective_multiplier;
            for &(i, m) in &step.updated {
                v -= m * lambda[i];
            }
            lambda[step.pivot_row] = v;
        }
        lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Block, LinearFunctional};

    fn unwrap(p: PresolveOutcome) -> Presolved {
        match p {
            PresolveOutcome::Ready(p) => *p,
            PresolveOutcome::Infeasible(msg) => panic!("unexpected infeasible: {msg}"),
        }
    }

    #[test]
    fn binomial_free_column_merges_rows() {
        // x00 + w = 1, x11 - w = 2  ->  x00 + x11 = 3
        let mut p = SdpProblem::new();
        p.add_block(Block::psd(2));
        let w = p.add_free_vars(1);
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 0, 1.0);
        f.add_free(w, 1.0);
        p.add_equality(f, 1.0);
        let mut f = LinearFunctional::new();
        f.add_entry(0, 1, 1, 1.0);
        f.add_free(w, -1.0);
        p.add_equality(f, 2.0);
        let pre = unwrap(presolve(&p));
        assert_eq!(pre.rows.len(), 1);
        assert_eq!(pre.rows[0].entries.len(), 2);
        assert_eq!(pre.rows[0].rhs, 3.0);

        let x = vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.5])];
        let wv = pre.recover_free(&x);
        assert!((wv[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unbounded_free_direction_is_reported() {
        let mut p = SdpProblem::new();
        p.add_block(Block::psd(1));
        let w = p.add_free_vars(1);
        p.objective.add_free(w, 1.0);
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 0, 1.0);
        p.add_equality(f, 1.0);
        assert!(matches!(presolve(&p), PresolveOutcome::Infeasible(_)));
    }

    #[test]
    fn inconsistent_zero_row_is_reported() {
        // w = 1 and w = 2
        let mut p = SdpProblem::new();
        p.add_block(Block::psd(1));
        let w = p.add_free_vars(1);
        for rhs in [1.0, 2.0] {
            let mut f = LinearFunctional::new();
            f.add_free(w, 1.0);
            p.add_equality(f, rhs);
        }
        assert!(matches!(presolve(&p), PresolveOutcome::Infeasible(_)));
    }

    #[test]
    fn dual_recovery_satisfies_free_columns() {
        // objective: w1 + 2 w2 ; rows mix w's with block entries
        let mut p = SdpProblem::new();
        p.add_block(Block::psd(2));
        let w = p.add_free_vars(2);
        p.objective.add_free(w, 1.0);
        p.objective.add_free(w + 1, 2.0);
        let coefs = [(1.0, 0.0), (1.0, 1.0), (0.0, 3.0), (2.0, -1.0)];
        for (r, &(a, b)) in coefs.iter().enumerate() {
            let mut f = LinearFunctional::new();
            f.add_entry(0, r % 2, (r / 2) % 2, 1.0 + r as f64);
            if a != 0.0 {
                f.add_free(w, a);
            }
            if b != 0.0 {
                f.add_free(w + 1, b);
            }
            p.add_equality(f, 1.0);
        }
        let pre = unwrap(presolve(&p));
        assert_eq!(pre.rows.len(), 2);
        let reduced = vec![0.3, -0.7];
        let lambda = pre.recover_dual(&reduced);
        // F' lambda must equal the free objective weights.
        let col0: f64 = coefs.iter().zip(&lambda).map(|(c, l)| c.0 * l).sum();
        let col1: f64 = coefs.iter().zip(&lambda).map(|(c, l)| c.1 * l).sum();
        assert!((col0 - 1.0).abs() < 1e-12, "{col0}");
        assert!((col1 - 2.0).abs() < 1e-12, "{col1}");
    }
}
