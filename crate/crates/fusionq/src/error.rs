//! Error type shared by all modules.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, FusionError>;

/// Terminal state of a QP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Both KKT residuals fell below the absolute tolerance.
    Solved,
    /// Iteration budget exhausted while residuals were still shrinking.
    MaxIter,
    /// Residuals stalled; the constraint system is deemed unsatisfiable.
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Solved => write!(f, "solved"),
            SolveStatus::MaxIter => write!(f, "max_iter"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
        }
    }
}

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionError {
    /// An operation that needs at least one example got an empty sample.
    EmptySample,
    /// A label other than -1/+1 was encountered.
    InvalidLabel { value: String, line: Option<u64> },
    /// Two objects that must agree in size do not.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// q' weights outside the [0, 1/n] box.
    InvalidWeights(String),
    /// Ill-formed QP: asymmetric quadratic, inconsistent dimensions, crossed bounds.
    InvalidProblem(String),
    /// Hyperparameter outside its admissible range.
    InvalidHyperparameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// The margin equality cannot be met inside the box; carries the largest
    /// margin parameter that would still be feasible on this sample.
    InfeasibleMargin { mu: f64, max_feasible_mu: f64 },
    /// A ranking operation needs both classes present.
    MissingClass { class: &'static str },
    /// The pairwise program would create more slack variables than the cap allows.
    ProblemTooLarge { slack_count: usize, cap: usize },
    /// The QP solver stopped without a solution certificate.
    SolverFailure {
        status: SolveStatus,
        primal_residual: f64,
        dual_residual: f64,
    },
    /// C-bound hypothesis fails: the first margin moment is not positive.
    UndefinedBound { first_moment: f64 },
    /// Second margin moment vanished; the C-bound denominator is zero.
    DegenerateMoments,
    /// Paired t-test on differences with zero sample variance.
    DegenerateTest,
    /// MAP requested on a sample without positive examples.
    UndefinedMap,
    /// Prec@j rank outside 1..=m.
    RankOutOfRange { j: usize, m: usize },
    /// MAP-weighted vote with an all-zero MAP total.
    DegenerateWeights,
    /// A constant voter column cannot be standardized.
    DegenerateStandardization { voter: String },
    /// A stratified split or fold ended up without the class it needs.
    StratificationFailure(String),
    /// Every grid point failed during cross-validation.
    NoFeasibleModel,
    /// Malformed data file; `line` is 1-based.
    DataFormat { line: u64, message: String },
    /// Model file written by an unsupported format version.
    VersionMismatch { found: String },
    /// Model file checksum does not match its payload.
    ChecksumMismatch,
    /// Underlying I/O failure.
    Io(String),
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySample => write!(f, "empty sample"),
            Self::InvalidLabel { value, line: Some(line) } => {
                write!(f, "line {line}: label {value:?} is not -1 or 1")
            }
            Self::InvalidLabel { value, line: None } => {
                write!(f, "label {value:?} is not -1 or 1")
            }
            Self::ShapeMismatch { what, expected, got } => {
                write!(f, "{what}: expected {expected}, got {got}")
            }
            Self::InvalidWeights(msg) => write!(f, "invalid weights: {msg}"),
            Self::InvalidProblem(msg) => write!(f, "invalid problem: {msg}"),
            Self::InvalidHyperparameter { name, value, reason } => {
                write!(f, "hyperparameter {name}={value}: {reason}")
            }
            Self::InfeasibleMargin { mu, max_feasible_mu } => write!(
                f,
                "margin constraint infeasible at mu={mu}; largest feasible mu is about {max_feasible_mu}"
            ),
            Self::MissingClass { class } => {
                write!(f, "sample has no {class} examples")
            }
            Self::ProblemTooLarge { slack_count, cap } => write!(
                f,
                "pairwise program needs {slack_count} slack variables (cap {cap}); use mincq-pwav instead"
            ),
            Self::SolverFailure { status, primal_residual, dual_residual } => write!(
                f,
                "solver stopped with status {status} (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})"
            ),
            Self::UndefinedBound { first_moment } => write!(
                f,
                "C-bound undefined: first margin moment {first_moment} is not positive"
            ),
            Self::DegenerateMoments => write!(f, "C-bound undefined: second margin moment is zero"),
            Self::DegenerateTest => write!(f, "paired t-test degenerate: zero variance of differences"),
            Self::UndefinedMap => write!(f, "MAP undefined: no positive examples"),
            Self::RankOutOfRange { j, m } => write!(f, "rank {j} outside 1..={m}"),
            Self::DegenerateWeights => write!(f, "MAP-weighted vote: all voter MAPs are zero"),
            Self::DegenerateStandardization { voter } => {
                write!(f, "voter {voter:?} is constant on the training sample and cannot be standardized")
            }
            Self::StratificationFailure(msg) => write!(f, "stratification failure: {msg}"),
            Self::NoFeasibleModel => write!(f, "no grid point produced a feasible model"),
            Self::DataFormat { line, message } => write!(f, "line {line}: {message}"),
            Self::VersionMismatch { found } => {
                write!(f, "unsupported model format version {found:?}")
            }
            Self::ChecksumMismatch => write!(f, "model file checksum mismatch"),
            Self::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for FusionError {}

impl From<std::io::Error> for FusionError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
