//! Moment-SOS relaxations for cardinality and rank minimization.
//!
//! * [`poly`]: sparse polynomials, graded-lex bases, principal minors, Newton polytopes.
//! * [`moment`]: moment and localizing matrix layouts.
//! * [`relaxation`]: semialgebraic programs and their SDP relaxations.
//! * [`certify`]: solving, rank analysis, point extraction, SOS decompositions.
//! * [`oracle`]: brute-force and convex-heuristic baselines.

pub mod certify;
pub mod moment;
pub mod oracle;
pub mod poly;
pub mod relaxation;

pub use momentcard_sdp as sdp;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("relaxation order {order} too small for {what} (needs {needed})")]
    DegreeOverflow { what: String, order: usize, needed: usize },
    #[error(transparent)]
    Solver(#[from] momentcard_sdp::SdpError),
    #[error("solver failed: {0}")]
    SolveFailed(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("point extraction unavailable: moment matrix has rank {rank}")]
    ExtractionUnavailable { rank: usize },
    #[error("extracted point failed verification: {0}")]
    Verification(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("order mismatch: {0}")]
    OrderMismatch(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
