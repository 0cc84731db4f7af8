//! Small dense semidefinite programming toolkit.
//!
//! * [`SdpProblem`]: standard-form block-diagonal SDPs with free variables.
//! * [`solve`]: primal-dual interior-point solver.
//! * [`solve_lp`]: linear programs as a diagonal block.
//! * [`export_sdpa`] / [`import_sdpa`]: SDPA sparse text format.

mod lp;
mod presolve;
mod problem;
mod sdpa;
mod solver;

pub use lp::{solve_lp, Bounds, LpProblem, LpSolution};
pub use problem::{Block, BlockEntry, BlockKind, Equality, LinearFunctional, SdpProblem};
pub use sdpa::{export_sdpa, format_value, import_sdpa};
pub use solver::{solve, IterateInfo, SdpSolution, SolveStatus, SolverConfig};

#[derive(Debug, thiserror::Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("SDPA export: {0}")]
    Export(String),
    #[error("SDPA parse: {0}")]
    Parse(String),
}
