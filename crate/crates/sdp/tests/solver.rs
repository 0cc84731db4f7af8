mod common;

use common::{planted, two_by_two};
use momentcard_sdp::{solve, Block, LinearFunctional, SdpProblem, SolveStatus, SolverConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

#[test]
fn trace_with_fixed_corner() {
    // minimize tr X subject to X11 = 1 over 3x3 PSD matrices: optimum 1
    let mut p = SdpProblem::new();
    let b = p.add_block(Block::psd(3));
    let mut obj = LinearFunctional::new();
    for i in 0..3 {
        obj.add_entry(b, i, i, 1.0);
    }
    p.objective = obj;
    let mut f = LinearFunctional::new();
    f.add_entry(b, 0, 0, 1.0);
    p.add_equality(f, 1.0);
    let s = solve(&p, &cfg()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.primal_obj - 1.0).abs() < 1e-7, "{}", s.primal_obj);
    assert!((s.dual_obj - 1.0).abs() < 1e-7, "{}", s.dual_obj);
}

#[test]
fn two_by_two_lmi() {
    let s = solve(&two_by_two(), &cfg()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.primal_obj + 1.0).abs() < 1e-7, "{}", s.primal_obj);
    assert!((s.primal[0][(0, 1)] + 1.0).abs() < 1e-6);
    // dual: λ = (−1/2, −1/2), S = [[1/2, 1/2], [1/2, 1/2]]
    for &l in &s.dual {
        assert!((l + 0.5).abs() < 1e-6, "{l}");
    }
}

#[test]
fn infeasible_sdp_is_flagged() {
    // X11 = −1 has no PSD solution
    let mut p = SdpProblem::new();
    let b = p.add_block(Block::psd(2));
    let mut obj = LinearFunctional::new();
    obj.add_entry(b, 1, 1, 1.0);
    p.objective = obj;
    let mut f = LinearFunctional::new();
    f.add_entry(b, 0, 0, 1.0);
    p.add_equality(f, -1.0);
    let s = solve(&p, &cfg()).unwrap();
    assert_eq!(s.status, SolveStatus::InfeasibleSuspected);
}

#[test]
fn unbounded_sdp_is_flagged() {
    // minimize X12 subject to X11 = 1: X22 can grow without bound
    let mut p = SdpProblem::new();
    let b = p.add_block(Block::psd(2));
    let mut obj = LinearFunctional::new();
    obj.add_entry(b, 0, 1, 0.5);
    p.objective = obj;
    let mut f = LinearFunctional::new();
    f.add_entry(b, 0, 0, 1.0);
    p.add_equality(f, 1.0);
    let s = solve(&p, &cfg()).unwrap();
    assert_ne!(s.status, SolveStatus::Optimal);
}

#[test]
fn invalid_config_is_rejected() {
    let bad = SolverConfig { step_fraction: 1.5, ..SolverConfig::default() };
    assert!(solve(&two_by_two(), &bad).is_err());
}

#[test]
fn planted_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let nblocks = rng.gen_range(1..=3);
        let blocks: Vec<Block> = (0..nblocks)
            .map(|_| {
                let d = rng.gen_range(1..=6);
                if rng.gen_bool(0.25) {
                    Block::diagonal(d)
                } else {
                    Block::psd(d)
                }
            })
            .collect();
        let dim: usize = blocks.iter().map(|b| b.dim * (b.dim + 1) / 2).sum();
        let m = rng.gen_range(1..=dim.min(12));
        let nfree = if case % 5 == 0 { rng.gen_range(0..=m.min(2)) } else { 0 };
        let pl = planted(&blocks, m, nfree, &mut rng);

        let s = solve(&pl.problem, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal, "case {case}: {:?}", s.message);
        assert!(s.primal_infeas <= 1e-7, "case {case}: pinf {}", s.primal_infeas);
        assert!(s.dual_infeas <= 1e-7, "case {case}: dinf {}", s.dual_infeas);
        assert!(s.rel_gap <= 1e-7, "case {case}: gap {}", s.rel_gap);
        let scale = 1.0 + pl.optimum.abs();
        assert!((s.primal_obj - pl.optimum).abs() <= 1e-6 * scale, "case {case}: {} vs {}", s.primal_obj, pl.optimum);

        // Independent residual checks on the returned pair.
        for (eq, _) in pl.problem.equalities.iter().zip(&s.dual) {
            let r = eq.functional.eval(&s.primal, &s.free) - eq.rhs;
            assert!(r.abs() <= 1e-6 * (1.0 + eq.rhs.abs()), "case {case}: residual {r}");
        }
        for (x, z) in s.primal.iter().zip(&s.slack) {
            assert!(min_eig(x) >= -1e-7, "case {case}");
            assert!(min_eig(z) >= -1e-7, "case {case}");
            let comp = x.dot(z);
            assert!(comp <= 1e-6 * scale, "case {case}: complementarity {comp}");
        }
    }
}

#[test]
fn weak_duality_holds_at_feasible_iterates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let pl = planted(&[Block::psd(4), Block::diagonal(3)], 6, 0, &mut rng);
        let s = solve(&pl.problem, &cfg()).unwrap();
        assert!(!s.history.is_empty());
        for it in &s.history {
            if it.primal_infeas < 1e-9 && it.dual_infeas < 1e-9 {
                assert!(it.primal_obj >= it.dual_obj - 1e-7 * (1.0 + it.primal_obj.abs()));
            }
        }
        let last = s.history.last().unwrap();
        assert!(last.primal_obj - last.dual_obj >= -1e-6);
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pl = planted(&[Block::psd(5), Block::psd(2)], 8, 1, &mut rng);
    let a = solve(&pl.problem, &cfg()).unwrap();
    let b = solve(&pl.problem, &cfg()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.primal_obj.to_bits(), b.primal_obj.to_bits());
    assert_eq!(a.dual, b.dual);
}
