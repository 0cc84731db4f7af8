//! Command-line driver: problem files in, JSON reports and SDPA files out.

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use momentcard_core::certify::{certify_pair, solve_built, solve_relaxation, Certificate, CertifyConfig, RelaxationResult};
use momentcard_core::oracle::{brute_force_card, l1_heuristic, nuclear_heuristic, rounded_bound, OracleReport};
use momentcard_core::poly::PolynomialDoc;
use momentcard_core::relaxation::{
    build_moment_relaxation, envelope_program, matrices_from_rows, min_card_point, min_card_program, min_rank_point,
    min_rank_program, validate_envelope, EnvelopeOptions, EnvelopeValidation, ProblemInput, SemialgebraicProgram,
};
use momentcard_core::sdp::{export_sdpa, SolveStatus, SolverConfig};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Samples drawn when validating a fitted envelope.
const VALIDATION_SAMPLES: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Solver(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Io(_) | CliError::Solver(_) => EXIT_SOLVER,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl From<momentcard_core::Error> for CliError {
    fn from(e: momentcard_core::Error) -> Self {
        use momentcard_core::Error as E;
        match e {
            E::Infeasible(msg) => CliError::Infeasible(msg),
            E::Json(_) | E::Dimension(_) | E::InvalidArgument(_) | E::DegreeOverflow { .. } | E::TooLarge(_) => {
                CliError::Parse(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "momentcard", version, about = "Moment relaxations for cardinality and rank minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Relax,
    Certify,
    Bruteforce,
    Heuristic,
    Envelope,
    ExportSdpa,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the relaxation at each order of a range.
    Relax(RunArgs),
    /// Solve orders N and N+1 and test rank stabilization.
    Certify(RunArgs),
    /// Exact minimum cardinality by support enumeration.
    Bruteforce(RunArgs),
    /// ℓ₁ (cardinality) or trace (rank) heuristic.
    Heuristic(RunArgs),
    /// Fit a convex polynomial underestimator of the cardinality.
    Envelope(RunArgs),
    /// Write the order-N relaxation in SDPA sparse format.
    ExportSdpa(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Problem file (JSON).
    pub input: PathBuf,
    /// Relaxation order `N` or inclusive range `a..b`.
    #[arg(long, value_parser = parse_order)]
    pub order: Option<OrderRange>,
    /// Squared ball radius; overrides the problem file.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Solver gap and feasibility tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Envelope degree; overrides the problem file.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Drop the k-th inequality (the ball counts last).
    #[arg(long)]
    pub drop_constraint: Option<usize>,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderRange {
    pub first: usize,
    pub last: usize,
}

impl OrderRange {
    pub fn orders(&self) -> RangeInclusive<usize> {
        self.first..=self.last
    }
}

pub fn parse_order(s: &str) -> Result<OrderRange, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad order `{t}`"));
    let (first, last) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
        None => {
            let n = num(s)?;
            (n, n)
        }
    };
    if first == 0 || first > last {
        return Err(format!("order range `{s}` is empty or starts at 0"));
    }
    Ok(OrderRange { first, last })
}

/// One parsed invocation.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: CommandKind,
    pub args: RunArgs,
}

impl From<Command> for RunSpec {
    fn from(c: Command) -> Self {
        let (command, args) = match c {
            Command::Relax(a) => (CommandKind::Relax, a),
            Command::Certify(a) => (CommandKind::Certify, a),
            Command::Bruteforce(a) => (CommandKind::Bruteforce, a),
            Command::Heuristic(a) => (CommandKind::Heuristic, a),
            Command::Envelope(a) => (CommandKind::Envelope, a),
            Command::ExportSdpa(a) => (CommandKind::ExportSdpa, a),
        };
        RunSpec { command, args }
    }
}

#[derive(Debug, Serialize)]
pub struct RelaxEntry {
    pub rounded_bound: i64,
    #[serde(flatten)]
    pub result: RelaxationResult,
}

#[derive(Debug, Serialize)]
pub struct RelaxReport {
    pub alpha: f64,
    pub results: Vec<RelaxEntry>,
}

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    pub alpha: f64,
    pub certificate: Certificate,
    pub previous: RelaxEntry,
    pub current: RelaxEntry,
}

#[derive(Debug, Serialize)]
pub struct BruteForceReport {
    #[serde(flatten)]
    pub report: OracleReport,
}

#[derive(Debug, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum HeuristicReport {
    L1 { value: f64, x: Vec<f64> },
    Trace { value: f64, x: Vec<Vec<f64>>, rank: usize, solver_rank: usize },
}

#[derive(Debug, Serialize)]
pub struct EnvelopeReport {
    pub degree: usize,
    pub order: usize,
    pub alpha: f64,
    pub status: SolveStatus,
    pub integral: f64,
    pub polynomial: PolynomialDoc,
    pub validation: EnvelopeValidation,
}

/// What a run produced: a report and an exit code.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

fn solver_config(args: &RunArgs) -> Result<CertifyConfig, CliError> {
    let mut solver = SolverConfig::default();
    if let Some(t) = args.tol {
        solver.gap_tol = t;
        solver.feas_tol = t;
    }
    if let Some(m) = args.max_iter {
        solver.max_iter = m;
    }
    solver.validate().map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(CertifyConfig { solver, ..CertifyConfig::default() })
}

fn read_input(args: &RunArgs) -> Result<ProblemInput, CliError> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))?;
    ProblemInput::from_json(&text).map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))
}

fn norm2(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum()
}

/// `2 (1 + ‖p‖²)` at a heuristic feasible point.
fn default_alpha(input: &ProblemInput, cfg: &SolverConfig) -> Result<f64, CliError> {
    let point = match input {
        ProblemInput::Mincard { a, b, .. } | ProblemInput::Envelope { a, b, .. } => {
            let (_, x) = l1_heuristic(a, b, cfg)?;
            min_card_point(&x)
        }
        ProblemInput::Minrank { a_list, b, .. } => {
            let mats = matrices_from_rows(a_list)?;
            let r = nuclear_heuristic(&mats, b, cfg, 1e-6)?;
            min_rank_point(&r.x, &vec![0.0; r.x.nrows()], 1e-6)?
        }
    };
    Ok(2.0 * (1.0 + norm2(&point)))
}

fn alpha_for(args: &RunArgs, input: &ProblemInput, cfg: &SolverConfig) -> Result<f64, CliError> {
    let from_file = match input {
        ProblemInput::Mincard { alpha, .. } | ProblemInput::Minrank { alpha, .. } | ProblemInput::Envelope { alpha, .. } => *alpha,
    };
    match args.alpha.or(from_file) {
        Some(a) => Ok(a),
        None => default_alpha(input, cfg),
    }
}

fn program(args: &RunArgs, input: &ProblemInput, alpha: f64) -> Result<SemialgebraicProgram, CliError> {
    let sap = match input {
        ProblemInput::Mincard { a, b, .. } => min_card_program(a, b, alpha)?,
        ProblemInput::Minrank { a_list, b, .. } => min_rank_program(&matrices_from_rows(a_list)?, b, alpha)?,
        ProblemInput::Envelope { .. } => {
            return Err(CliError::Parse("envelope problems only support the envelope and export-sdpa commands".into()))
        }
    };
    match args.drop_constraint {
        Some(k) => Ok(sap.drop_constraint(k)?),
        None => Ok(sap),
    }
}

fn min_order(sap: &SemialgebraicProgram) -> usize {
    sap.max_degree().div_ceil(2).max(1)
}

fn entry(result: RelaxationResult) -> RelaxEntry {
    RelaxEntry { rounded_bound: rounded_bound(result.lower_bound), result }
}

fn status_code(statuses: impl IntoIterator<Item = SolveStatus>) -> i32 {
    if statuses.into_iter().any(|s| s == SolveStatus::InfeasibleSuspected) {
        EXIT_INFEASIBLE
    } else {
        0
    }
}

fn to_json<T: Serialize>(report: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::Solver(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn envelope_data(args: &RunArgs, input: &ProblemInput) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize), CliError> {
    let (a, b, file_degree) = match input {
        ProblemInput::Envelope { a, b, degree, .. } => (a, b, Some(*degree)),
        ProblemInput::Mincard { a, b, .. } => (a, b, None),
        ProblemInput::Minrank { .. } => return Err(CliError::Parse("envelope needs a cardinality problem".into())),
    };
    let degree = args.degree.or(file_degree).ok_or_else(|| CliError::Parse("envelope degree missing; pass --degree".into()))?;
    Ok((a.clone(), b.clone(), degree))
}

fn single_order(args: &RunArgs, default: usize) -> Result<usize, CliError> {
    match args.order {
        None => Ok(default),
        Some(r) if r.first == r.last => Ok(r.first),
        Some(_) => Err(CliError::Parse("this command takes a single order".into())),
    }
}

/// Runs one command and returns the report text with its exit code.
pub fn execute(spec: &RunSpec) -> Result<Outcome, CliError> {
    let args = &spec.args;
    let cfg = solver_config(args)?;
    let input = read_input(args)?;
    match spec.command {
        CommandKind::Relax => {
            let alpha = alpha_for(args, &input, &cfg.solver)?;
            let sap = program(args, &input, alpha)?;
            let range = args.order.unwrap_or(OrderRange { first: min_order(&sap), last: min_order(&sap) });
            let mut results = Vec::new();
            let mut failed = None;
            for order in range.orders() {
                match solve_relaxation(&sap, order, &cfg) {
                    Ok(r) => results.push(entry(r)),
                    Err(e) => {
                        let e = CliError::from(e);
                        eprintln!("momentcard: order {order}: {e}");
                        failed = Some(e.exit_code());
                        break;
                    }
                }
            }
            let code = failed.unwrap_or_else(|| status_code(results.iter().map(|r| r.result.status)));
            Ok(Outcome { text: to_json(&RelaxReport { alpha, results })?, code })
        }
        CommandKind::Certify => {
            let alpha = alpha_for(args, &input, &cfg.solver)?;
            let sap = program(args, &input, alpha)?;
            let order = single_order(args, min_order(&sap))?;
            let prev = solve_built(&build_moment_relaxation(&sap, order)?, &cfg)?;
            let mut cur = solve_built(&build_moment_relaxation(&sap, order + 1)?, &cfg)?;
            certify_pair(&sap, &prev, &mut cur, &cfg)?;
            let code = status_code([prev.status, cur.status]);
            let report = CertifyReport { alpha, certificate: Certificate::from_result(&cur), previous: entry(prev), current: entry(cur) };
            Ok(Outcome { text: to_json(&report)?, code })
        }
        CommandKind::Bruteforce => {
            let ProblemInput::Mincard { a, b, .. } = &input else {
                return Err(CliError::Parse("bruteforce needs a cardinality problem".into()));
            };
            let report = brute_force_card(a, b, &cfg.solver)?;
            Ok(Outcome { text: to_json(&BruteForceReport { report })?, code: 0 })
        }
        CommandKind::Heuristic => {
            let report = match &input {
                ProblemInput::Mincard { a, b, .. } | ProblemInput::Envelope { a, b, .. } => {
                    let (value, x) = l1_heuristic(a, b, &cfg.solver)?;
                    HeuristicReport::L1 { value, x }
                }
                ProblemInput::Minrank { a_list, b, .. } => {
                    let r = nuclear_heuristic(&matrices_from_rows(a_list)?, b, &cfg.solver, cfg.rank_tol)?;
                    let x = r.x.row_iter().map(|row| row.iter().copied().collect()).collect();
                    HeuristicReport::Trace { value: r.value, x, rank: r.rank, solver_rank: r.solver_rank }
                }
            };
            Ok(Outcome { text: to_json(&report)?, code: 0 })
        }
        CommandKind::Envelope => {
            let (a, b, degree) = envelope_data(args, &input)?;
            let order = single_order(args, degree.div_ceil(2).max(2))?;
            let alpha = match args.alpha.or(match &input {
                ProblemInput::Envelope { alpha, .. } | ProblemInput::Mincard { alpha, .. } => *alpha,
                ProblemInput::Minrank { .. } => None,
            }) {
                Some(al) => al,
                None => 2.0 * a[0].len() as f64 + 1.0,
            };
            let opts = EnvelopeOptions { alpha: Some(alpha), ..EnvelopeOptions::default() };
            let fit = envelope_program(&a, &b, degree, order, &opts)?.fit(&cfg.solver)?;
            let names: Vec<String> = (1..=a[0].len()).map(|i| format!("x{i}")).collect();
            let validation = validate_envelope(&fit.p, &a, &b, VALIDATION_SAMPLES, 0)?;
            let code = status_code([fit.status]);
            let report = EnvelopeReport {
                degree,
                order,
                alpha,
                status: fit.status,
                integral: fit.integral,
                polynomial: PolynomialDoc::new(&names, &fit.p)?,
                validation,
            };
            Ok(Outcome { text: to_json(&report)?, code })
        }
        CommandKind::ExportSdpa => {
            let sdp = match &input {
                ProblemInput::Envelope { .. } => {
                    let (a, b, degree) = envelope_data(args, &input)?;
                    let order = single_order(args, degree.div_ceil(2).max(2))?;
                    let opts = EnvelopeOptions { alpha: args.alpha, ..EnvelopeOptions::default() };
                    envelope_program(&a, &b, degree, order, &opts)?.sdp
                }
                _ => {
                    let alpha = alpha_for(args, &input, &cfg.solver)?;
                    let sap = program(args, &input, alpha)?;
                    let order = single_order(args, min_order(&sap))?;
                    build_moment_relaxation(&sap, order)?.sdp
                }
            };
            let text = export_sdpa(&sdp.split_free_vars()).map_err(|e| CliError::Solver(e.to_string()))?;
            Ok(Outcome { text, code: 0 })
        }
    }
}

/// Runs a command, writes its report and returns the process exit code.
pub fn run(spec: &RunSpec) -> i32 {
    let started = Instant::now();
    let result = execute(spec).and_then(|out| {
        match &spec.args.out {
            Some(path) => std::fs::write(path, &out.text)?,
            None => print!("{}", out.text),
        }
        Ok(out.code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("momentcard: {e} (after {:.2}s)", started.elapsed().as_secs_f64());
            e.exit_code()
        }
    }
}
