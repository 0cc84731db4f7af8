//! Random cardinality instances with a known feasible point.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Planted {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
}

/// Box `|xᵢ| ≤ 1` plus `rows` half-integer rows satisfied by a random point.
pub fn planted(n: usize, rows: usize, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut row = vec![0.0; n];
            row[i] = s;
            a.push(row);
            b.push(-1.0);
        }
    }
    for _ in 0..rows {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-4..=4) as f64 / 2.0).collect();
        let ax: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
        let slack = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.5) };
        a.push(row);
        b.push(ax - slack);
    }
    Planted { a, b, x }
}

pub fn card(x: &[f64], tol: f64) -> usize {
    x.iter().filter(|v| v.abs() > tol).count()
}
