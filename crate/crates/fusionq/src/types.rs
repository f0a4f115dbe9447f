//! Shared domain types and their invariants. No algorithms live here.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{FusionError, Result, SolveStatus};
use crate::kernel::KernelLayer;
use crate::linalg::Mat;
use crate::num::Real;

/// m x n table of real-valued voter outputs plus binary labels.
///
/// Rows are examples, columns are voters. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<F> {
    scores: Mat<F>,
    labels: Vec<i8>,
    voter_names: Vec<String>,
    example_ids: Vec<String>,
}

impl<F: Real> ScoreMatrix<F> {
    /// Validates all invariants: non-empty, finite scores, labels in
    /// {-1, +1}, unique voter names and example ids.
    pub fn new(
        scores: Mat<F>,
        labels: Vec<i8>,
        voter_names: Vec<String>,
        example_ids: Vec<String>,
    ) -> Result<Self> {
        if scores.rows() == 0 || scores.cols() == 0 {
            return Err(FusionError::EmptySample);
        }
        if labels.len() != scores.rows() {
            return Err(FusionError::ShapeMismatch {
                what: "label count vs rows",
                expected: scores.rows(),
                got: labels.len(),
            });
        }
        if voter_names.len() != scores.cols() {
            return Err(FusionError::ShapeMismatch {
                what: "voter name count vs columns",
                expected: scores.cols(),
                got: voter_names.len(),
            });
        }
        if example_ids.len() != scores.rows() {
            return Err(FusionError::ShapeMismatch {
                what: "example id count vs rows",
                expected: scores.rows(),
                got: example_ids.len(),
            });
        }
        for &y in &labels {
            if y != -1 && y != 1 {
                return Err(FusionError::InvalidLabel {
                    value: y.to_string(),
                    line: None,
                });
            }
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(FusionError::InvalidProblem("non-finite score".into()));
        }
        let unique: HashSet<&String> = voter_names.iter().collect();
        if unique.len() != voter_names.len() {
            return Err(FusionError::InvalidProblem("duplicate voter name".into()));
        }
        let unique: HashSet<&String> = example_ids.iter().collect();
        if unique.len() != example_ids.len() {
            return Err(FusionError::InvalidProblem("duplicate example id".into()));
        }
        Ok(Self {
            scores,
            labels,
            voter_names,
            example_ids,
        })
    }

    /// Convenience constructor naming voters `v1..vn` and examples `e1..em`.
    pub fn from_rows(rows: &[Vec<F>], labels: Vec<i8>) -> Result<Self> {
        let scores = Mat::from_rows(rows);
        let voter_names = (1..=scores.cols()).map(|i| format!("v{i}")).collect();
        let example_ids = (1..=scores.rows()).map(|j| format!("e{j}")).collect();
        Self::new(scores, labels, voter_names, example_ids)
    }

    /// Number of examples (m).
    pub fn examples(&self) -> usize {
        self.scores.rows()
    }

    /// Number of voters (n).
    pub fn voters(&self) -> usize {
        self.scores.cols()
    }

    /// Output of voter `i` on example `j`.
    pub fn score(&self, j: usize, i: usize) -> F {
        self.scores[(j, i)]
    }

    /// All voter outputs for example `j`.
    pub fn row(&self, j: usize) -> &[F] {
        self.scores.row(j)
    }

    pub fn scores(&self) -> &Mat<F> {
        &self.scores
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> i8 {
        self.labels[j]
    }

    pub fn voter_names(&self) -> &[String] {
        &self.voter_names
    }

    pub fn example_ids(&self) -> &[String] {
        &self.example_ids
    }

    /// New matrix restricted to `rows`, preserving their given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let picked: Vec<Vec<F>> = rows.iter().map(|&j| self.row(j).to_vec()).collect();
        Self::new(
            Mat::from_rows(&picked),
            rows.iter().map(|&j| self.labels[j]).collect(),
            self.voter_names.clone(),
            rows.iter().map(|&j| self.example_ids[j].clone()).collect(),
        )
    }

    /// Element-wise scalar conversion.
    pub fn map_scalar<G: Real>(&self) -> ScoreMatrix<G> {
        ScoreMatrix {
            scores: self.scores.map_scalar(),
            labels: self.labels.clone(),
            voter_names: self.voter_names.clone(),
            example_ids: self.example_ids.clone(),
        }
    }
}

/// Row indices of a sample partitioned by label sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveNegativeSplit {
    pub positive_rows: Vec<usize>,
    pub negative_rows: Vec<usize>,
}

impl PositiveNegativeSplit {
    pub fn m_plus(&self) -> usize {
        self.positive_rows.len()
    }

    pub fn m_minus(&self) -> usize {
        self.negative_rows.len()
    }
}

/// Partitions rows by label sign; order within each side preserves row order.
///
/// Empty sides are allowed here; ranking operations reject them.
pub fn split_by_label<F: Real>(s: &ScoreMatrix<F>) -> PositiveNegativeSplit {
    let mut positive_rows = Vec::new();
    let mut negative_rows = Vec::new();
    for (j, &y) in s.labels().iter().enumerate() {
        if y == 1 {
            positive_rows.push(j);
        } else {
            negative_rows.push(j);
        }
    }
    PositiveNegativeSplit {
        positive_rows,
        negative_rows,
    }
}

/// Derives the signed vote weights `q_i = 2 q'_i - 1/n` from box variables.
///
/// Rejects any `q'_i` outside `[0, 1/n]`.
pub fn derive_signed_weights<F: Real>(q_prime: &[F], n: usize) -> Result<Vec<F>> {
    if q_prime.len() != n {
        return Err(FusionError::ShapeMismatch {
            what: "weight count vs voter count",
            expected: n,
            got: q_prime.len(),
        });
    }
    let box_hi = F::one() / F::of(n as f64);
    let two = F::of(2.0);
    q_prime
        .iter()
        .map(|&qp| {
            if qp < F::zero() || qp > box_hi {
                Err(FusionError::InvalidWeights(format!(
                    "q'={} outside [0, 1/{n}]",
                    qp.widen()
                )))
            } else {
                Ok(two * qp - box_hi)
            }
        })
        .collect()
}

/// QP variables `q'` and the derived signed weights `q` of a majority vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VoterWeights<F> {
    q_prime: Vec<F>,
    q: Vec<F>,
}

impl<F: Real> VoterWeights<F> {
    /// Builds from box variables, deriving the signed weights.
    pub fn from_q_prime(q_prime: Vec<F>) -> Result<Self> {
        let q = derive_signed_weights(&q_prime, q_prime.len())?;
        Ok(Self { q_prime, q })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q_prime(&self) -> &[F] {
        &self.q_prime
    }

    pub fn q(&self) -> &[F] {
        &self.q
    }
}

/// Convex QP in standard form:
/// minimize `1/2 z^T P z + c^T z` subject to `A z = b`, `G z <= h`,
/// `lower <= z <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<F> {
    pub quadratic: Mat<F>,
    pub linear: Vec<F>,
    pub eq_matrix: Mat<F>,
    pub eq_rhs: Vec<F>,
    pub ineq_matrix: Mat<F>,
    pub ineq_rhs: Vec<F>,
    pub lower: Vec<F>,
    pub upper: Vec<F>,
}

impl<F: Real> QpProblem<F> {
    /// Unconstrained-template constructor; attach constraints via the
    /// `with_*` builders.
    pub fn new(quadratic: Mat<F>, linear: Vec<F>) -> Self {
        let n = linear.len();
        Self {
            quadratic,
            linear,
            eq_matrix: Mat::zeros(0, n),
            eq_rhs: Vec::new(),
            ineq_matrix: Mat::zeros(0, n),
            ineq_rhs: Vec::new(),
            lower: vec![F::neg_infinity(); n],
            upper: vec![F::infinity(); n],
        }
    }

    pub fn with_eq(mut self, eq_matrix: Mat<F>, eq_rhs: Vec<F>) -> Self {
        self.eq_matrix = eq_matrix;
        self.eq_rhs = eq_rhs;
        self
    }

    pub fn with_ineq(mut self, ineq_matrix: Mat<F>, ineq_rhs: Vec<F>) -> Self {
        self.ineq_matrix = ineq_matrix;
        self.ineq_rhs = ineq_rhs;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<F>, upper: Vec<F>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    /// Checks symmetry, dimension consistency and bound ordering.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.quadratic.rows() != n || self.quadratic.cols() != n {
            return Err(FusionError::InvalidProblem(format!(
                "quadratic is {}x{}, expected {n}x{n}",
                self.quadratic.rows(),
                self.quadratic.cols()
            )));
        }
        if !self.quadratic.is_symmetric(F::of(1e-10)) {
            return Err(FusionError::InvalidProblem("quadratic not symmetric".into()));
        }
        if self.eq_matrix.cols() != n || self.eq_matrix.rows() != self.eq_rhs.len() {
            return Err(FusionError::InvalidProblem("equality dimensions inconsistent".into()));
        }
        if self.ineq_matrix.cols() != n || self.ineq_matrix.rows() != self.ineq_rhs.len() {
            return Err(FusionError::InvalidProblem("inequality dimensions inconsistent".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(FusionError::InvalidProblem("bound dimensions inconsistent".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(FusionError::InvalidProblem("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    /// `1/2 z^T P z + c^T z` evaluated at `z`.
    pub fn objective(&self, z: &[F]) -> F {
        F::of(0.5) * self.quadratic.quad_form(z) + crate::num::dot(&self.linear, z)
    }
}

/// Certified outcome of a QP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<F> {
    pub z_star: Vec<F>,
    pub objective_value: F,
    pub primal_residual: F,
    pub dual_residual: F,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Fusion rule identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    MinCq,
    MinCqPw,
    MinCqPwav,
    Sum,
    MapWeighted,
    BestConfidence,
    HBest,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::MinCq,
        Algorithm::MinCqPw,
        Algorithm::MinCqPwav,
        Algorithm::Sum,
        Algorithm::MapWeighted,
        Algorithm::BestConfidence,
        Algorithm::HBest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MinCq => "mincq",
            Algorithm::MinCqPw => "mincq-pw",
            Algorithm::MinCqPwav => "mincq-pwav",
            Algorithm::Sum => "sum",
            Algorithm::MapWeighted => "map-weighted",
            Algorithm::BestConfidence => "best-confidence",
            Algorithm::HBest => "h-best",
        }
    }

    /// True for the three MinCq variants that learn weights via the QP.
    pub fn is_mincq(self) -> bool {
        matches!(self, Algorithm::MinCq | Algorithm::MinCqPw | Algorithm::MinCqPwav)
    }

    /// True for the two ranking variants with pairwise slack constraints.
    pub fn is_ranking(self) -> bool {
        matches!(self, Algorithm::MinCqPw | Algorithm::MinCqPwav)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| FusionError::InvalidProblem(format!("unknown algorithm {s:?}")))
    }
}

/// Weight storage of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelWeights<F> {
    /// QP-learned weights, keeping `q'` so the box and margin constraints
    /// can be re-verified on a loaded model.
    Learned(VoterWeights<F>),
    /// Fixed per-voter weights of a baseline rule.
    Fixed(Vec<F>),
}

impl<F: Real> ModelWeights<F> {
    /// Signed weights used by the vote.
    pub fn q(&self) -> &[F] {
        match self {
            ModelWeights::Learned(w) => w.q(),
            ModelWeights::Fixed(w) => w,
        }
    }

    pub fn len(&self) -> usize {
        self.q().len()
    }

    pub fn is_empty(&self) -> bool {
        self.q().is_empty()
    }
}

/// A trained vote: algorithm, weights, optional kernel layer, hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<F> {
    pub algorithm: Algorithm,
    pub weights: ModelWeights<F>,
    pub kernel: Option<KernelLayer<F>>,
    pub hyperparams: BTreeMap<String, f64>,
    pub voter_names: Vec<String>,
}

impl<F: Real> FusionModel<F> {
    /// Voter count the model votes over (kernel anchors when a layer is present).
    pub fn voter_count(&self) -> usize {
        self.weights.len()
    }
}

/// Per-sample evaluation of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<F> {
    pub risk: F,
    pub map: F,
    pub first_moment: F,
    pub second_moment: F,
    /// Defined only when the first margin moment is positive.
    pub c_bound: Option<F>,
    pub diversity: Mat<F>,
}
