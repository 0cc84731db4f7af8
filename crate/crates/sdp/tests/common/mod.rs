#![allow(dead_code)]

use momentcard_sdp::{Block, BlockKind, LinearFunctional, SdpProblem};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random problem together with a primal-dual pair satisfying the optimality conditions.
pub struct Planted {
    pub problem: SdpProblem,
    pub x: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub lambda: Vec<f64>,
    pub optimum: f64,
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

fn functional_of(blocks: &[DMatrix<f64>], kinds: &[BlockKind], free: &[f64]) -> LinearFunctional {
    let mut f = LinearFunctional::new();
    for (k, (a, kind)) in blocks.iter().zip(kinds).enumerate() {
        for i in 0..a.nrows() {
            for j in i..a.ncols() {
                if *kind == BlockKind::Diagonal && i != j {
                    continue;
                }
                if a[(i, j)] != 0.0 {
                    f.add_entry(k, i, j, a[(i, j)]);
                }
            }
        }
    }
    for (v, &c) in free.iter().enumerate() {
        if c != 0.0 {
            f.add_free(v, c);
        }
    }
    f
}

fn random_symmetric(n: usize, kind: BlockKind, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if kind == BlockKind::Diagonal && i != j {
                continue;
            }
            if rng.gen_bool(density) {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }
    a
}

/// Blocks of the given kinds and sizes, `m` equalities and `nfree` free variables.
///
/// `X = Q diag(p, 0) Qᵀ` and `S = Q diag(0, q) Qᵀ` share an eigenbasis so `XS = 0`.
pub fn planted(blocks: &[Block], m: usize, nfree: usize, rng: &mut ChaCha8Rng) -> Planted {
    let kinds: Vec<BlockKind> = blocks.iter().map(|b| b.kind).collect();
    let mut x = Vec::new();
    let mut s = Vec::new();
    for b in blocks {
        let n = b.dim;
        let r = rng.gen_range(1..=n);
        let q = match b.kind {
            BlockKind::Psd => random_orthogonal(n, rng),
            BlockKind::Diagonal => DMatrix::identity(n, n),
        };
        let mut dx = DMatrix::zeros(n, n);
        let mut ds = DMatrix::zeros(n, n);
        for i in 0..n {
            if i < r {
                dx[(i, i)] = rng.gen_range(0.5..2.0);
            } else {
                ds[(i, i)] = rng.gen_range(0.5..2.0);
            }
        }
        x.push(&q * dx * q.transpose());
        s.push(&q * ds * q.transpose());
    }
    let free: Vec<f64> = (0..nfree).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lambda: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut problem = SdpProblem::new();
    for b in blocks {
        problem.add_block(*b);
    }
    problem.add_free_vars(nfree);
    let mut c: Vec<DMatrix<f64>> = s.clone();
    let mut c_free = vec![0.0; nfree];
    for (i, &li) in lambda.iter().enumerate() {
        let a: Vec<DMatrix<f64>> = blocks.iter().map(|b| random_symmetric(b.dim, b.kind, 0.6, rng)).collect();
        // Every free variable appears in the first equalities so the free columns have full rank.
        let af: Vec<f64> = (0..nfree)
            .map(|v| if v == i || rng.gen_bool(0.3) { rng.gen_range(-1.0..1.0) + if v == i { 2.0 } else { 0.0 } } else { 0.0 })
            .collect();
        let f = functional_of(&a, &kinds, &af);
        let rhs = f.eval(&x, &free);
        for (ck, ak) in c.iter_mut().zip(&a) {
            *ck += ak * li;
        }
        for (cv, av) in c_free.iter_mut().zip(&af) {
            *cv += li * av;
        }
        problem.add_equality(f, rhs);
    }
    problem.objective = functional_of(&c, &kinds, &c_free);
    let optimum = problem.objective.eval(&x, &free);
    Planted { problem, x, s, free, lambda, optimum }
}

pub fn two_by_two() -> SdpProblem {
    // minimize X12 subject to X11 = X22 = 1, i.e. min t with [[1, t], [t, 1]] ⪰ 0
    let mut p = SdpProblem::new();
    let b = p.add_block(Block::psd(2));
    let mut obj = LinearFunctional::new();
    obj.add_entry(b, 0, 1, 0.5);
    p.objective = obj;
    for i in 0..2 {
        let mut f = LinearFunctional::new();
        f.add_entry(b, i, i, 1.0);
        p.add_equality(f, 1.0);
    }
    p
}
