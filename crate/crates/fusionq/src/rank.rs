//! Ranking extensions of MinCq: order-preserving pairwise preferences.
//!
//! `train_pw` adds one slack variable per positive-negative pair with the
//! constraint
//! `xi >= (1/(m+ m-)) sum_i (2 q'_i - 1/n) (h_i(x-) - h_i(x+))`;
//! `train_pwav` keeps one slack per positive and averages the right-hand
//! side over the negatives. Both keep the margin equality and the box of the
//! plain program, and penalize `beta * sum(xi)` in the objective. The full
//! pairwise program grows one variable per pair, which is what makes it
//! expensive on larger samples; the averaged form is the practical default.

use std::collections::BTreeMap;

use crate::error::{FusionError, Result, SolveStatus};
use crate::linalg::Mat;
use crate::mincq::{assemble, check_margin_feasible, weights_from_solution, TRAIN_EPS};
use crate::num::{dot, Real};
use crate::qp::{solve, SolverConfig};
use crate::types::{
    split_by_label, Algorithm, FusionModel, ModelWeights, PositiveNegativeSplit, QpProblem,
    QpSolution, ScoreMatrix,
};

/// Default cap on the pairwise slack count; beyond it `train_pw` refuses and
/// points at `train_pwav`.
pub const DEFAULT_SLACK_CAP: usize = 250_000;

/// Default trade-off grid for the slack penalty.
pub const DEFAULT_BETA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Which pairwise construction a program uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankVariant {
    /// One slack per positive-negative pair.
    Pairwise,
    /// One slack per positive, averaged over the negatives.
    AveragedPairwise,
}

fn checked_split<F: Real>(s: &ScoreMatrix<F>) -> Result<PositiveNegativeSplit> {
    let split = split_by_label(s);
    if split.m_plus() == 0 {
        return Err(FusionError::MissingClass { class: "positive" });
    }
    if split.m_minus() == 0 {
        return Err(FusionError::MissingClass { class: "negative" });
    }
    Ok(split)
}

/// Order-preserving pairwise loss of a model's vote:
/// `(1/(m+ m-)) sum_{j+} sum_{j-} [H(x_{j-}) - H(x_{j+})]_+`.
pub fn pairwise_loss<F: Real>(model: &FusionModel<F>, s: &ScoreMatrix<F>) -> Result<F> {
    let split = checked_split(s)?;
    let votes = crate::mincq::vote_scores(model, s)?;
    let mut acc = F::zero();
    for &jp in &split.positive_rows {
        for &jn in &split.negative_rows {
            acc = acc + (votes[jn] - votes[jp]).max(F::zero());
        }
    }
    Ok(acc / F::of((split.m_plus() * split.m_minus()) as f64))
}

/// Per-constraint values `(1/(m+ m-)) sum_i q_i (h_i(x_{j-}) - h_i(x_{j+}))`
/// for fixed signed weights, ordered positives-major (all negatives of the
/// first positive, then the second, ...).
pub fn pw_constraint_values<F: Real>(
    q: &[F],
    s: &ScoreMatrix<F>,
    split: &PositiveNegativeSplit,
) -> Vec<F> {
    let scale = F::one() / F::of((split.m_plus() * split.m_minus()) as f64);
    let votes: Vec<F> = (0..s.examples()).map(|j| dot(q, s.row(j))).collect();
    let mut out = Vec::with_capacity(split.m_plus() * split.m_minus());
    for &jp in &split.positive_rows {
        for &jn in &split.negative_rows {
            out.push((votes[jn] - votes[jp]) * scale);
        }
    }
    out
}

/// Averaged constraint values, one per positive: the sum of the pair values
/// of that positive over all negatives.
pub fn pwav_constraint_values<F: Real>(
    q: &[F],
    s: &ScoreMatrix<F>,
    split: &PositiveNegativeSplit,
) -> Vec<F> {
    let scale = F::one() / F::of((split.m_plus() * split.m_minus()) as f64);
    let votes: Vec<F> = (0..s.examples()).map(|j| dot(q, s.row(j))).collect();
    split
        .positive_rows
        .iter()
        .map(|&jp| {
            let mut acc = F::zero();
            for &jn in &split.negative_rows {
                acc = acc + votes[jn] - votes[jp];
            }
            acc * scale
        })
        .collect()
}

/// Analytic slack minimum for fixed weights: the hinge of each constraint.
pub fn analytic_slacks<F: Real>(
    variant: RankVariant,
    q: &[F],
    s: &ScoreMatrix<F>,
    split: &PositiveNegativeSplit,
) -> Vec<F> {
    let values = match variant {
        RankVariant::Pairwise => pw_constraint_values(q, s, split),
        RankVariant::AveragedPairwise => pwav_constraint_values(q, s, split),
    };
    values.into_iter().map(|v| v.max(F::zero())).collect()
}

/// Builds the extended QP over `(q', xi)` for either variant.
fn rank_qp<F: Real>(
    s: &ScoreMatrix<F>,
    split: &PositiveNegativeSplit,
    assembly: &crate::mincq::MincqAssembly<F>,
    beta: F,
    variant: RankVariant,
) -> QpProblem<F> {
    let n = s.voters();
    let (mp, mn) = (split.m_plus(), split.m_minus());
    let slack_count = match variant {
        RankVariant::Pairwise => mp * mn,
        RankVariant::AveragedPairwise => mp,
    };
    let dim = n + slack_count;
    let two = F::of(2.0);
    let scale = F::one() / F::of((mp * mn) as f64);
    let inv_n = F::one() / F::of(n as f64);

    let mut quad = Mat::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            quad[(i, j)] = two * assembly.m_matrix[(i, j)];
        }
    }
    let mut linear = vec![F::zero(); dim];
    for i in 0..n {
        linear[i] = -assembly.a_vector[i];
    }
    for l in linear.iter_mut().skip(n) {
        *l = beta;
    }

    let mut eq_row = vec![F::zero(); dim];
    eq_row[..n].copy_from_slice(&assembly.margin_vector);

    // One row per slack constraint, rearranged to `row . z <= rhs`:
    // (2/(m+ m-)) sum_i d_i q'_i - xi <= (1/(n m+ m-)) sum_i d_i.
    let mut ineq = Mat::zeros(slack_count, dim);
    let mut ineq_rhs = vec![F::zero(); slack_count];
    let mut row_idx = 0;
    for (p_idx, &jp) in split.positive_rows.iter().enumerate() {
        match variant {
            RankVariant::Pairwise => {
                for &jn in &split.negative_rows {
                    let mut d_sum = F::zero();
                    for i in 0..n {
                        let d = s.score(jn, i) - s.score(jp, i);
                        ineq[(row_idx, i)] = two * scale * d;
                        d_sum = d_sum + d;
                    }
                    ineq[(row_idx, n + row_idx)] = -F::one();
                    ineq_rhs[row_idx] = scale * inv_n * d_sum;
                    row_idx += 1;
                }
            }
            RankVariant::AveragedPairwise => {
                let mut d_sum = F::zero();
                for i in 0..n {
                    let mut di = F::zero();
                    for &jn in &split.negative_rows {
                        di = di + s.score(jn, i) - s.score(jp, i);
                    }
                    ineq[(row_idx, i)] = two * scale * di;
                    d_sum = d_sum + di;
                }
                ineq[(row_idx, n + p_idx)] = -F::one();
                ineq_rhs[row_idx] = scale * inv_n * d_sum;
                row_idx += 1;
            }
        }
    }

    let box_hi = F::one() / F::of(n as f64);
    let mut lower = vec![F::zero(); dim];
    let mut upper = vec![box_hi; n];
    upper.extend(std::iter::repeat(F::infinity()).take(slack_count));
    lower[n..].fill(F::zero());

    QpProblem::new(quad, linear)
        .with_eq(Mat::from_rows(&[eq_row]), vec![assembly.margin_rhs])
        .with_ineq(ineq, ineq_rhs)
        .with_bounds(lower, upper)
}

/// Shared trainer; returns the model plus the projected QP solution so the
/// slack block can be inspected.
pub(crate) fn solve_rank<F: Real>(
    s: &ScoreMatrix<F>,
    mu: F,
    beta: F,
    cfg: &SolverConfig,
    variant: RankVariant,
    slack_cap: usize,
) -> Result<(FusionModel<F>, QpSolution<F>)> {
    if beta <= F::zero() || !beta.is_finite() {
        return Err(FusionError::InvalidHyperparameter {
            name: "beta",
            value: beta.widen(),
            reason: "must be a positive real",
        });
    }
    let split = checked_split(s)?;
    if variant == RankVariant::Pairwise {
        let slack_count = split.m_plus() * split.m_minus();
        if slack_count > slack_cap {
            return Err(FusionError::ProblemTooLarge {
                slack_count,
                cap: slack_cap,
            });
        }
    }
    let assembly = assemble(s, mu)?;
    check_margin_feasible(&assembly)?;
    let problem = rank_qp(s, &split, &assembly, beta, variant);
    let mut solution = solve(&problem, &cfg.tightened(TRAIN_EPS))?;
    if solution.status != SolveStatus::Solved {
        return Err(FusionError::SolverFailure {
            status: solution.status,
            primal_residual: solution.primal_residual.widen(),
            dual_residual: solution.dual_residual.widen(),
        });
    }
    // Exact projection onto the variable bounds: q' into its box, slacks to
    // nonnegative. The reported objective is recomputed at the projected point.
    let n = s.voters();
    for (j, z) in solution.z_star.iter_mut().enumerate() {
        *z = z.max(problem.lower[j]).min(problem.upper[j].min(F::max_value()));
    }
    solution.objective_value = problem.objective(&solution.z_star);
    let weights = weights_from_solution(&solution.z_star[..n], n)?;

    let algorithm = match variant {
        RankVariant::Pairwise => Algorithm::MinCqPw,
        RankVariant::AveragedPairwise => Algorithm::MinCqPwav,
    };
    let mut hyperparams = BTreeMap::new();
    hyperparams.insert("mu".to_string(), mu.widen());
    hyperparams.insert("beta".to_string(), beta.widen());
    let model = FusionModel {
        algorithm,
        weights: ModelWeights::Learned(weights),
        kernel: None,
        hyperparams,
        voter_names: s.voter_names().to_vec(),
    };
    Ok((model, solution))
}

/// Trains MinCq with one slack per positive-negative pair.
pub fn train_pw<F: Real>(
    s: &ScoreMatrix<F>,
    mu: F,
    beta: F,
    cfg: &SolverConfig,
) -> Result<FusionModel<F>> {
    train_pw_capped(s, mu, beta, cfg, DEFAULT_SLACK_CAP)
}

/// `train_pw` with an explicit slack cap.
pub fn train_pw_capped<F: Real>(
    s: &ScoreMatrix<F>,
    mu: F,
    beta: F,
    cfg: &SolverConfig,
    slack_cap: usize,
) -> Result<FusionModel<F>> {
    solve_rank(s, mu, beta, cfg, RankVariant::Pairwise, slack_cap).map(|(m, _)| m)
}

/// Trains MinCq with one slack per positive, averaged over the negatives.
pub fn train_pwav<F: Real>(
    s: &ScoreMatrix<F>,
    mu: F,
    beta: F,
    cfg: &SolverConfig,
) -> Result<FusionModel<F>> {
    solve_rank(s, mu, beta, cfg, RankVariant::AveragedPairwise, usize::MAX).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mincq::train;

    fn fixed_model(q: Vec<f64>) -> FusionModel<f64> {
        let voter_names = (1..=q.len()).map(|i| format!("v{i}")).collect();
        FusionModel {
            algorithm: Algorithm::MinCq,
            weights: ModelWeights::Fixed(q),
            kernel: None,
            hyperparams: BTreeMap::new(),
            voter_names,
        }
    }

    #[test]
    fn loss_zero_when_pairs_ordered() {
        // single voter with weight 1: vote scores are the voter's scores
        let s = ScoreMatrix::from_rows(&[vec![0.5], vec![-0.5]], vec![1, -1]).unwrap();
        let loss = pairwise_loss(&fixed_model(vec![1.0]), &s).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn loss_single_violated_pair() {
        let s = ScoreMatrix::from_rows(&[vec![0.2], vec![0.4]], vec![1, -1]).unwrap();
        let loss = pairwise_loss(&fixed_model(vec![1.0]), &s).unwrap();
        assert!((loss - 0.2).abs() < 1e-15);
    }

    #[test]
    fn loss_enumerates_pairs() {
        // positives score {1, -1}, negative {0}: hinges 0 and 1, mean 0.5
        let s =
            ScoreMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![0.0]], vec![1, 1, -1]).unwrap();
        let loss = pairwise_loss(&fixed_model(vec![1.0]), &s).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_needs_both_classes() {
        let s = ScoreMatrix::from_rows(&[vec![0.5], vec![0.4]], vec![1, 1]).unwrap();
        assert!(matches!(
            pairwise_loss(&fixed_model(vec![1.0]), &s),
            Err(FusionError::MissingClass { class: "negative" })
        ));
        let s = ScoreMatrix::from_rows(&[vec![0.5], vec![0.4]], vec![-1, -1]).unwrap();
        assert!(matches!(
            pairwise_loss(&fixed_model(vec![1.0]), &s),
            Err(FusionError::MissingClass { class: "positive" })
        ));
    }

    /// Perfect voter plus a partly anti-correlated one (margin-feasible).
    fn rankable_sample() -> ScoreMatrix<f64> {
        ScoreMatrix::from_rows(
            &[
                vec![1.0, -1.0],
                vec![1.0, 1.0],
                vec![-1.0, 1.0],
                vec![-1.0, 1.0],
            ],
            vec![1, 1, -1, -1],
        )
        .unwrap()
    }

    #[test]
    fn separable_instance_has_zero_slacks() {
        for variant in [RankVariant::Pairwise, RankVariant::AveragedPairwise] {
            let (model, solution) = solve_rank(
                &rankable_sample(),
                0.1,
                1.0,
                &SolverConfig::default(),
                variant,
                DEFAULT_SLACK_CAP,
            )
            .unwrap();
            let n = 2;
            assert!(
                solution.z_star[n..].iter().all(|&xi| xi <= 1e-6),
                "{variant:?} slacks {:?}",
                &solution.z_star[n..]
            );
            assert_eq!(pairwise_loss(&model, &rankable_sample()).unwrap(), 0.0);
        }
    }

    #[test]
    fn slacks_match_hinge_of_constraints_at_optimum() {
        // mildly noisy instance (one anti-correlated voter keeps the margin
        // equality feasible) so some slacks are active
        let s: ScoreMatrix<f64> = ScoreMatrix::from_rows(
            &[
                vec![0.4, -0.2],
                vec![-0.1, -0.6],
                vec![0.2, 0.3],
                vec![-0.5, 0.1],
            ],
            vec![1, 1, -1, -1],
        )
        .unwrap();
        let split = split_by_label(&s);
        for variant in [RankVariant::Pairwise, RankVariant::AveragedPairwise] {
            let (model, solution) = solve_rank(
                &s,
                0.05,
                2.0,
                &SolverConfig::default(),
                variant,
                DEFAULT_SLACK_CAP,
            )
            .unwrap();
            let analytic = analytic_slacks(variant, model.weights.q(), &s, &split);
            let solved = &solution.z_star[2..];
            assert_eq!(analytic.len(), solved.len());
            for (&a, &b) in analytic.iter().zip(solved) {
                assert!((a - b).abs() <= 1e-6, "{variant:?}: {a} vs {b}");
            }
            // slack nonnegativity is exact (projection)
            assert!(solved.iter().all(|&xi| xi >= 0.0));
        }
    }

    #[test]
    fn pwav_slack_total_never_exceeds_pw() {
        // hinge of an average <= average of hinges, for any fixed weights
        let s = ScoreMatrix::from_rows(
            &[
                vec![0.3, -0.7],
                vec![-0.2, 0.5],
                vec![0.1, 0.4],
                vec![-0.6, -0.1],
                vec![0.2, 0.2],
            ],
            vec![1, 1, -1, -1, -1],
        )
        .unwrap();
        let split = split_by_label(&s);
        for q in [
            vec![0.5, -0.5],
            vec![0.1, 0.3],
            vec![-0.2, -0.4],
            vec![0.0, 0.0],
        ] {
            let pw: f64 = analytic_slacks(RankVariant::Pairwise, &q, &s, &split)
                .iter()
                .sum();
            let pwav: f64 = analytic_slacks(RankVariant::AveragedPairwise, &q, &s, &split)
                .iter()
                .sum();
            assert!(pwav <= pw + 1e-12, "q={q:?}: pwav {pwav} > pw {pw}");
        }
    }

    #[test]
    fn beta_to_zero_recovers_plain_mincq() {
        let s = rankable_sample();
        let cfg = SolverConfig::default();
        let plain = train(&s, 0.1, &cfg).unwrap();
        for variant in [RankVariant::Pairwise, RankVariant::AveragedPairwise] {
            let (model, _) =
                solve_rank(&s, 0.1, 1e-8, &cfg, variant, DEFAULT_SLACK_CAP).unwrap();
            let dist = model
                .weights
                .q()
                .iter()
                .zip(plain.weights.q())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dist <= 1e-3, "{variant:?} distance {dist}");
        }
    }

    #[test]
    fn pw_toy_instance_matches_grid_oracle() {
        // n=2, m+=m-=2: grid over (q'_1, q'_2) on the margin equality with
        // analytic slacks, objective = q'^T M q' - A^T q' + beta sum(xi).
        let s = ScoreMatrix::from_rows(
            &[
                vec![0.6, -0.4],
                vec![0.2, 0.8],
                vec![-0.3, 0.5],
                vec![-0.7, 0.2],
            ],
            vec![1, 1, -1, -1],
        )
        .unwrap();
        let mu = 0.05;
        let beta = 0.5;
        let assembly = assemble(&s, mu).unwrap();
        let split = split_by_label(&s);
        let (model, solution) = solve_rank(
            &s,
            mu,
            beta,
            &SolverConfig::default(),
            RankVariant::Pairwise,
            DEFAULT_SLACK_CAP,
        )
        .unwrap();

        let objective = |q_prime: &[f64]| -> f64 {
            let q = crate::types::derive_signed_weights(q_prime, 2).unwrap();
            let slacks: f64 = analytic_slacks(RankVariant::Pairwise, &q, &s, &split)
                .iter()
                .sum();
            assembly.objective(q_prime) + beta * slacks
        };

        let m = &assembly.margin_vector;
        let mut best = f64::INFINITY;
        let mut best_q = vec![0.0, 0.0];
        let steps = 1000;
        for k in 0..=steps {
            let q2 = 0.5 * k as f64 / steps as f64;
            let q1 = (assembly.margin_rhs - m[1] * q2) / m[0];
            if (0.0..=0.5).contains(&q1) {
                let obj = objective(&[q1, q2]);
                if obj < best {
                    best = obj;
                    best_q = vec![q1, q2];
                }
            }
        }
        let n = 2;
        let solved_obj =
            assembly.objective(&solution.z_star[..n]) + beta * solution.z_star[n..].iter().sum::<f64>();
        assert!(
            solved_obj <= best + 1e-3,
            "solved {solved_obj} vs grid {best} at {best_q:?}"
        );
        let ModelWeights::Learned(w) = &model.weights else { unreachable!() };
        for (a, b) in w.q_prime().iter().zip(&best_q) {
            assert!((a - b).abs() < 2e-3, "weights {:?} vs {:?}", w.q_prime(), best_q);
        }
    }

    #[test]
    fn slack_cap_guards_pw() {
        let s = rankable_sample();
        match train_pw_capped(&s, 0.1, 1.0, &SolverConfig::default(), 3) {
            Err(FusionError::ProblemTooLarge { slack_count, cap }) => {
                assert_eq!(slack_count, 4);
                assert_eq!(cap, 3);
            }
            other => panic!("expected problem-too-large, got {other:?}"),
        }
    }

    #[test]
    fn invalid_beta_rejected() {
        let s = rankable_sample();
        assert!(matches!(
            train_pwav(&s, 0.1, 0.0, &SolverConfig::default()),
            Err(FusionError::InvalidHyperparameter { name: "beta", .. })
        ));
    }

    #[test]
    fn rank_training_keeps_margin_and_box() {
        let s = rankable_sample();
        let assembly = assemble(&s, 0.1).unwrap();
        for variant in [RankVariant::Pairwise, RankVariant::AveragedPairwise] {
            let (model, _) =
                solve_rank(&s, 0.1, 1.0, &SolverConfig::default(), variant, usize::MAX).unwrap();
            let ModelWeights::Learned(w) = &model.weights else { unreachable!() };
            let residual = (dot(&assembly.margin_vector, w.q_prime()) - assembly.margin_rhs).abs();
            assert!(residual <= 1e-6, "{variant:?} residual {residual}");
            assert!(w.q_prime().iter().all(|&qp| (0.0..=0.5).contains(&qp)));
        }
    }
}
