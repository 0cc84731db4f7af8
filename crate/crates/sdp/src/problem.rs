//! Standard-form block-diagonal semidefinite programs.
//!
//! ```text
//! minimize    <C, X> + c_w' w
//! subject to  <A_i, X> + f_i' w = b_i     i = 1..m
//!             X = diag(X_1, ..., X_k),  X_j PSD (or entrywise >= 0 for diagonal blocks)
//!             w free
//! ```
//!
//! Coefficient matrices are symmetric and addressed through their upper
//! triangle. An entry `(i, j, v)` with `i < j` stands for the two symmetric
//! matrix elements `A_ij = A_ji = v`, so it contributes `2 v X_ij` to the
//! inner product. This matches the SDPA convention.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::SdpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Symmetric positive semidefinite matrix block.
    Psd,
    /// Nonnegative vector stored as the diagonal of a matrix block (LP cone).
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub dim: usize,
    pub kind: BlockKind,
}

impl Block {
    pub fn psd(dim: usize) -> Self {
        Block { dim, kind: BlockKind::Psd }
    }

    pub fn diagonal(dim: usize) -> Self {
        Block { dim, kind: BlockKind::Diagonal }
    }
}

/// One upper-triangular coefficient of a symmetric block matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A linear functional over all block entries and free variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub entries: Vec<BlockEntry>,
    pub free: Vec<(usize, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` to the symmetric coefficient at `(row, col)` of `block`.
    /// The pair is stored with `row <= col`.
    pub fn add_entry(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(BlockEntry { block, row, col, value });
    }

    pub fn add_free(&mut self, var: usize, value: f64) {
        self.free.push((var, value));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.free.is_empty()
    }

    /// Merges duplicate coordinates, drops exact zeros and sorts entries.
    pub fn normalized(&self) -> LinearFunctional {
        let mut entries: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            let key = if e.row <= e.col { (e.block, e.row, e.col) } else { (e.block, e.col, e.row) };
            *entries.entry(key).or_insert(0.0) += e.value;
        }
        let mut free: BTreeMap<usize, f64> = BTreeMap::new();
        for &(k, v) in &self.free {
            *free.entry(k).or_insert(0.0) += v;
        }
        LinearFunctional {
            entries: entries
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((block, row, col), value)| BlockEntry { block, row, col, value })
                .collect(),
            free: free.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    /// Evaluates the functional at block values `x` (full symmetric matrices)
    /// and free values `w`.
    pub fn eval(&self, x: &[nalgebra::DMatrix<f64>], w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for e in &self.entries {
            let v = x[e.block][(e.row, e.col)];
            acc += if e.row == e.col { e.value * v } else { 2.0 * e.value * v };
        }
        for &(k, c) in &self.free {
            acc += c * w[k];
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub functional: LinearFunctional,
    pub rhs: f64,
}

/// A block-diagonal SDP in standard (primal) form; the objective is minimized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<Block>,
    pub free_vars: usize,
    pub equalities: Vec<Equality>,
    pub objective: LinearFunctional,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn add_block(&mut self, block: Block) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    /// Allocates `count` new free variables and returns the index of the first.
    pub fn add_free_vars(&mut self, count: usize) -> usize {
        let first = self.free_vars;
        self.free_vars += count;
        first
    }

    pub fn add_equality(&mut self, functional: LinearFunctional, rhs: f64) -> usize {
        self.equalities.push(Equality { functional, rhs });
        self.equalities.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.equalities.len()
    }

    /// Checks that every functional addresses declared coordinates only.
    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |f: &LinearFunctional, what: &str| -> Result<(), SdpError> {
            for e in &f.entries {
                let block = self.blocks.get(e.block).ok_or_else(|| {
                    SdpError::Malformed(format!("{what}: block {} does not exist", e.block))
                })?;
                if e.row >= block.dim || e.col >= block.dim {
                    return Err(SdpError::Malformed(format!(
                        "{what}: entry ({}, {}) outside block {} of dimension {}",
                        e.row, e.col, e.block, block.dim
                    )));
                }
                if block.kind == BlockKind::Diagonal && e.row != e.col {
                    return Err(SdpError::Malformed(format!(
                        "{what}: off-diagonal entry ({}, {}) in diagonal block {}",
                        e.row, e.col, e.block
                    )));
                }
                if !e.value.is_finite() {
                    return Err(SdpError::Malformed(format!("{what}: non-finite coefficient")));
                }
            }
            for &(k, v) in &f.free {
                if k >= self.free_vars {
                    return Err(SdpError::Malformed(format!(
                        "{what}: free variable {k} not declared"
                    )));
                }
                if !v.is_finite() {
                    return Err(SdpError::Malformed(format!("{what}: non-finite coefficient")));
                }
            }
            Ok(())
        };
        for (i, b) in self.blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(SdpError::Malformed(format!("block {i} has dimension 0")));
            }
        }
        check(&self.objective, "objective")?;
        for (i, eq) in self.equalities.iter().enumerate() {
            check(&eq.functional, &format!("equality {i}"))?;
            if !eq.rhs.is_finite() {
                return Err(SdpError::Malformed(format!("equality {i}: non-finite rhs")));
            }
        }
        Ok(())
    }

    /// Canonical copy with every functional normalized.
    pub fn normalized(&self) -> SdpProblem {
        SdpProblem {
            blocks: self.blocks.clone(),
            free_vars: self.free_vars,
            equalities: self
                .equalities
                .iter()
                .map(|e| Equality { functional: e.functional.normalized(), rhs: e.rhs })
                .collect(),
            objective: self.objective.normalized(),
        }
    }

    /// Equivalent problem without free variables: each `w_k` becomes
    /// `w_k⁺ − w_k⁻` with both parts in one trailing diagonal block of size
    /// `2 · free_vars`. Variable `k` maps to diagonal positions `2k`, `2k + 1`.
    pub fn split_free_vars(&self) -> SdpProblem {
        if self.free_vars == 0 {
            return self.clone();
        }
        let mut out = SdpProblem {
            blocks: self.blocks.clone(),
            free_vars: 0,
            equalities: Vec::with_capacity(self.equalities.len()),
            objective: LinearFunctional::new(),
        };
        let split = out.add_block(Block::diagonal(2 * self.free_vars));
        let lower = |f: &LinearFunctional| {
            let mut g = LinearFunctional { entries: f.entries.clone(), free: Vec::new() };
            for &(k, v) in &f.free {
                g.add_entry(split, 2 * k, 2 * k, v);
                g.add_entry(split, 2 * k + 1, 2 * k + 1, -v);
            }
            g
        };
        out.objective = lower(&self.objective);
        for eq in &self.equalities {
            out.equalities.push(Equality { functional: lower(&eq.functional), rhs: eq.rhs });
        }
        out
    }

    /// Total barrier degree: sum of block dimensions.
    pub fn cone_degree(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn add_entry_orders_pair() {
        let mut f = LinearFunctional::new();
        f.add_entry(0, 2, 1, 3.0);
        assert_eq!(f.entries[0].row, 1);
        assert_eq!(f.entries[0].col, 2);
    }

    #[test]
    fn normalized_merges_and_drops_zeros() {
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 1, 1.0);
        f.add_entry(0, 1, 0, 2.0);
        f.add_entry(0, 1, 1, 1.0);
        f.add_entry(0, 1, 1, -1.0);
        f.add_free(0, 0.5);
        let g = f.normalized();
        assert_eq!(g.entries.len(), 1);
        assert_eq!(g.entries[0].value, 3.0);
        assert_eq!(g.free, vec![(0, 0.5)]);
    }

    #[test]
    fn eval_counts_off_diagonal_twice() {
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 1, 1.0);
        f.add_entry(0, 0, 0, 1.0);
        let x = vec![DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 5.0])];
        assert_eq!(f.eval(&x, &[]), 1.0 + 6.0);
    }

    #[test]
    fn validate_rejects_bad_entries() {
        let mut p = SdpProblem::new();
        p.add_block(Block::diagonal(2));
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 1, 1.0);
        p.add_equality(f, 1.0);
        assert!(matches!(p.validate(), Err(SdpError::Malformed(_))));

        let mut p = SdpProblem::new();
        p.add_block(Block::psd(2));
        let mut f = LinearFunctional::new();
        f.add_free(0, 1.0);
        p.add_equality(f, 1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn split_free_vars_preserves_values() {
        let mut p = SdpProblem::new();
        p.add_block(Block::psd(1));
        let w = p.add_free_vars(1);
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 0, 1.0);
        f.add_free(w, 2.0);
        p.add_equality(f, 3.0);
        let q = p.split_free_vars();
        assert_eq!(q.free_vars, 0);
        assert_eq!(q.blocks.len(), 2);
        let x = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]))];
        // w = 2 - 1 = 1  ->  1 + 2 = 3
        assert_eq!(q.equalities[0].functional.eval(&x, &[]), 3.0);
    }
}
