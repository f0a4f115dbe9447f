//! The classification MinCq learner: assembles the Gram-matrix quadratic
//! program, solves it, and wraps the result as a [`FusionModel`].
//!
//! The program minimizes `q'^T M_S q' - A_S^T q'` over box variables
//! `0 <= q'_i <= 1/n`, subject to the margin equality
//! `m_S^T q' = mu/2 + (1/nm) sum_j sum_i y_j h_i(x_j)`. The vote then uses
//! the signed weights `q_i = 2 q'_i - 1/n`, so a voter can enter the
//! majority vote with its opposite orientation without materializing 2n
//! voters.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{FusionError, Result, SolveStatus};
use crate::linalg::Mat;
use crate::num::{dot, Real};
use crate::qp::{solve, SolverConfig};
use crate::types::{
    Algorithm, FusionModel, ModelWeights, QpProblem, ScoreMatrix, VoterWeights,
};

/// Default margin-parameter grid, spanning the useful range for scores in
/// [-1, 1].
pub const DEFAULT_MU_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

/// Trainers solve the QP to this tolerance (or tighter, if the caller asks)
/// so the margin equality still holds to 1e-6 after the box projection.
pub(crate) const TRAIN_EPS: f64 = 1e-8;

/// Assembled data of the MinCq program.
#[derive(Debug, Clone, PartialEq)]
pub struct MincqAssembly<F> {
    /// Gram matrix `M_S[i][i'] = (1/m) sum_j h_i(x_j) h_i'(x_j)`.
    pub m_matrix: Mat<F>,
    /// `A_S[i] = (1/nm) sum_i' sum_j h_i(x_j) h_i'(x_j)`.
    pub a_vector: Vec<F>,
    /// Voter margins `m_S[i] = (1/m) sum_j y_j h_i(x_j)`.
    pub margin_vector: Vec<F>,
    /// Right-hand side of the margin equality.
    pub margin_rhs: F,
    pub mu: F,
}

impl<F: Real> MincqAssembly<F> {
    /// `q'^T M_S q' - A_S^T q'`, the quantity the program minimizes.
    pub fn objective(&self, q_prime: &[F]) -> F {
        self.m_matrix.quad_form(q_prime) - dot(&self.a_vector, q_prime)
    }

    /// Range of `m_S^T q'` reachable inside the box, and the largest margin
    /// parameter for which the equality stays feasible.
    pub(crate) fn feasible_margin(&self) -> (F, F, f64) {
        let n = F::of(self.margin_vector.len() as f64);
        let mut lo = F::zero();
        let mut hi = F::zero();
        let mut base = F::zero();
        for &mi in &self.margin_vector {
            lo = lo + mi.min(F::zero());
            hi = hi + mi.max(F::zero());
            base = base + mi;
        }
        lo = lo / n;
        hi = hi / n;
        base = base / n;
        let max_mu = (2.0 * (hi - base).widen()).max(0.0);
        (lo, hi, max_mu)
    }
}

/// Builds `M_S`, `A_S`, `m_S` and the margin right-hand side for `mu > 0`.
pub fn assemble<F: Real>(s: &ScoreMatrix<F>, mu: F) -> Result<MincqAssembly<F>> {
    if mu <= F::zero() || !mu.is_finite() {
        return Err(FusionError::InvalidHyperparameter {
            name: "mu",
            value: mu.widen(),
            reason: "must be a positive real",
        });
    }
    let n = s.voters();
    let m = s.examples();
    let m_matrix = crate::metrics::diversity_matrix(s);
    let inv_n = F::one() / F::of(n as f64);
    let a_vector: Vec<F> = (0..n)
        .map(|i| m_matrix.row(i).iter().copied().sum::<F>() * inv_n)
        .collect();
    let inv_m = F::one() / F::of(m as f64);
    let margin_vector: Vec<F> = (0..n)
        .map(|i| {
            let mut acc = F::zero();
            for j in 0..m {
                acc = acc + F::of(s.label(j) as f64) * s.score(j, i);
            }
            acc * inv_m
        })
        .collect();
    let margin_sum: F = margin_vector.iter().copied().sum();
    let margin_rhs = mu / F::of(2.0) + margin_sum * inv_n;
    Ok(MincqAssembly {
        m_matrix,
        a_vector,
        margin_vector,
        margin_rhs,
        mu,
    })
}

/// The assembly as a standard-form QP over the box variables `q'`.
pub(crate) fn mincq_qp<F: Real>(assembly: &MincqAssembly<F>) -> QpProblem<F> {
    let n = assembly.margin_vector.len();
    let two = F::of(2.0);
    let p = Mat::from_fn(n, n, |i, j| two * assembly.m_matrix[(i, j)]);
    let c: Vec<F> = assembly.a_vector.iter().map(|&a| -a).collect();
    let box_hi = F::one() / F::of(n as f64);
    QpProblem::new(p, c)
        .with_eq(
            Mat::from_rows(&[assembly.margin_vector.clone()]),
            vec![assembly.margin_rhs],
        )
        .with_bounds(vec![F::zero(); n], vec![box_hi; n])
}

/// Errors out with the maximal feasible margin estimate when the equality
/// cannot be met inside the box.
pub(crate) fn check_margin_feasible<F: Real>(assembly: &MincqAssembly<F>) -> Result<()> {
    let (lo, hi, max_mu) = assembly.feasible_margin();
    let slack = F::of(1e-12) * (F::one() + hi.abs().max(lo.abs()));
    if assembly.margin_rhs > hi + slack || assembly.margin_rhs < lo - slack {
        return Err(FusionError::InfeasibleMargin {
            mu: assembly.mu.widen(),
            max_feasible_mu: max_mu,
        });
    }
    Ok(())
}

/// Extracts box-exact weights from a solved QP and wraps them as a model.
pub(crate) fn weights_from_solution<F: Real>(q_prime_raw: &[F], n: usize) -> Result<VoterWeights<F>> {
    let box_hi = F::one() / F::of(n as f64);
    let q_prime: Vec<F> = q_prime_raw
        .iter()
        .map(|&v| v.max(F::zero()).min(box_hi))
        .collect();
    VoterWeights::from_q_prime(q_prime)
}

/// Trains the classification MinCq vote.
pub fn train<F: Real>(s: &ScoreMatrix<F>, mu: F, cfg: &SolverConfig) -> Result<FusionModel<F>> {
    let assembly = assemble(s, mu)?;
    check_margin_feasible(&assembly)?;
    let problem = mincq_qp(&assembly);
    let solution = solve(&problem, &cfg.tightened(TRAIN_EPS))?;
    if solution.status != SolveStatus::Solved {
        return Err(FusionError::SolverFailure {
            status: solution.status,
            primal_residual: solution.primal_residual.widen(),
            dual_residual: solution.dual_residual.widen(),
        });
    }
    let weights = weights_from_solution(&solution.z_star, s.voters())?;
    let mut hyperparams = BTreeMap::new();
    hyperparams.insert("mu".to_string(), mu.widen());
    Ok(FusionModel {
        algorithm: Algorithm::MinCq,
        weights: ModelWeights::Learned(weights),
        kernel: None,
        hyperparams,
        voter_names: s.voter_names().to_vec(),
    })
}

/// One prediction: the vote score and its sign label (`+1` when the score
/// is `>= 0`, matching the sign convention of the vote).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<F> {
    pub score: F,
    pub label: i8,
}

/// The matrix a model votes over: the input itself, or its kernel expansion
/// when the model carries a layer.
pub(crate) fn voting_matrix<'a, F: Real>(
    model: &FusionModel<F>,
    s: &'a ScoreMatrix<F>,
) -> Result<Cow<'a, ScoreMatrix<F>>> {
    match &model.kernel {
        Some(layer) => Ok(Cow::Owned(layer.transform(s)?)),
        None => Ok(Cow::Borrowed(s)),
    }
}

/// Vote scores over an already-expanded matrix.
pub(crate) fn vote_scores_on<F: Real>(
    model: &FusionModel<F>,
    voting: &ScoreMatrix<F>,
) -> Result<Vec<F>> {
    if voting.voters() != model.voter_count() {
        return Err(FusionError::ShapeMismatch {
            what: "sample voters vs model weights",
            expected: model.voter_count(),
            got: voting.voters(),
        });
    }
    let scores = match model.algorithm {
        Algorithm::BestConfidence => (0..voting.examples())
            .map(|j| crate::baselines::best_confidence_row(voting.row(j)))
            .collect(),
        _ => {
            let q = model.weights.q();
            (0..voting.examples()).map(|j| dot(q, voting.row(j))).collect()
        }
    };
    Ok(scores)
}

/// Vote scores `H(x) = sum_i q_i h_i(x)` of a model on a sample (kernel
/// expansion applied when the model has a layer).
pub fn vote_scores<F: Real>(model: &FusionModel<F>, s: &ScoreMatrix<F>) -> Result<Vec<F>> {
    let voting = voting_matrix(model, s)?;
    vote_scores_on(model, &voting)
}

/// Scores plus sign labels; a zero score maps to `+1`.
pub fn predict<F: Real>(model: &FusionModel<F>, s: &ScoreMatrix<F>) -> Result<Vec<Prediction<F>>> {
    Ok(vote_scores(model, s)?
        .into_iter()
        .map(|score| Prediction {
            score,
            label: if score >= F::zero() { 1 } else { -1 },
        })
        .collect())
}
