//! The four fixed fusion baselines: unweighted sum, MAP-weighted vote,
//! highest-confidence voter, and the single best voter by training MAP.
//!
//! Ties always resolve to the lowest voter index.

use std::collections::BTreeMap;

use crate::error::{FusionError, Result};
use crate::metrics::mean_average_precision;
use crate::num::Real;
use crate::types::{Algorithm, FusionModel, ModelWeights, ScoreMatrix};

/// Unweighted vote `Sigma(x) = sum_i h_i(x)`.
pub fn sum_vote<F: Real>(s_eval: &ScoreMatrix<F>) -> Vec<F> {
    (0..s_eval.examples())
        .map(|j| s_eval.row(j).iter().copied().sum())
        .collect()
}

/// Per-voter MAP on the training sample, normalized to weights summing to
/// one. Accumulation and normalization run in f64; a fix-up pass pins the
/// recomputed sum to exactly 1.
fn map_weights<F: Real>(s_train: &ScoreMatrix<F>) -> Result<Vec<f64>> {
    let n = s_train.voters();
    let labels = s_train.labels();
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let col: Vec<F> = (0..s_train.examples()).map(|j| s_train.score(j, i)).collect();
        maps.push(mean_average_precision(&col, labels)?.widen());
    }
    let total: f64 = maps.iter().sum();
    if total <= 0.0 {
        return Err(FusionError::DegenerateWeights);
    }
    let mut weights: Vec<f64> = maps.iter().map(|m| m / total).collect();
    for _ in 0..2 {
        let sum: f64 = weights.iter().sum();
        if sum == 1.0 {
            break;
        }
        let largest = (0..n)
            .max_by(|&a, &b| weights[a].partial_cmp(&weights[b]).unwrap())
            .unwrap();
        weights[largest] += 1.0 - sum;
    }
    Ok(weights)
}

/// MAP-weighted vote `sum_i (MAP_i / sum MAP) h_i(x)`; weights come from
/// `s_train`, scores from `s_eval`.
pub fn map_weighted_vote<F: Real>(
    s_train: &ScoreMatrix<F>,
    s_eval: &ScoreMatrix<F>,
) -> Result<Vec<F>> {
    if s_train.voters() != s_eval.voters() {
        return Err(FusionError::ShapeMismatch {
            what: "train voters vs eval voters",
            expected: s_train.voters(),
            got: s_eval.voters(),
        });
    }
    let weights = map_weights(s_train)?;
    Ok((0..s_eval.examples())
        .map(|j| {
            s_eval
                .row(j)
                .iter()
                .zip(&weights)
                .fold(F::zero(), |acc, (&h, &w)| acc + F::of(w) * h)
        })
        .collect())
}

/// Signed score of the most confident voter in one row.
pub(crate) fn best_confidence_row<F: Real>(row: &[F]) -> F {
    let mut best = row[0];
    for &v in &row[1..] {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best
}

/// Per example, the signed score of the voter with maximal absolute score.
pub fn best_confidence_vote<F: Real>(s_eval: &ScoreMatrix<F>) -> Vec<F> {
    (0..s_eval.examples())
        .map(|j| best_confidence_row(s_eval.row(j)))
        .collect()
}

/// Index of the voter maximizing MAP on the training sample.
pub fn h_best<F: Real>(s_train: &ScoreMatrix<F>) -> Result<usize> {
    let labels = s_train.labels();
    let mut best = 0usize;
    let mut best_map = F::neg_infinity();
    for i in 0..s_train.voters() {
        let col: Vec<F> = (0..s_train.examples()).map(|j| s_train.score(j, i)).collect();
        let map = mean_average_precision(&col, labels)?;
        if map > best_map {
            best_map = map;
            best = i;
        }
    }
    Ok(best)
}

/// Builds the baseline as a [`FusionModel`]-compatible predictor.
pub fn fit_baseline<F: Real>(algorithm: Algorithm, s_train: &ScoreMatrix<F>) -> Result<FusionModel<F>> {
    let n = s_train.voters();
    let weights = match algorithm {
        Algorithm::Sum => vec![F::one(); n],
        Algorithm::MapWeighted => map_weights(s_train)?.into_iter().map(F::of).collect(),
        // prediction ignores the weights; store a unit placeholder per voter
        Algorithm::BestConfidence => vec![F::one(); n],
        Algorithm::HBest => {
            let best = h_best(s_train)?;
            (0..n).map(|i| if i == best { F::one() } else { F::zero() }).collect()
        }
        _ => {
            return Err(FusionError::InvalidProblem(format!(
                "{algorithm} is not a baseline rule"
            )))
        }
    };
    Ok(FusionModel {
        algorithm,
        weights: ModelWeights::Fixed(weights),
        kernel: None,
        hyperparams: BTreeMap::new(),
        voter_names: s_train.voter_names().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_vote_adds_rows() {
        let s: ScoreMatrix<f64> = ScoreMatrix::from_rows(
            &[vec![0.3, -0.1, 0.5], vec![0.0, 0.0, 0.0]],
            vec![1, -1],
        )
        .unwrap();
        let v = sum_vote(&s);
        assert!((v[0] - 0.7).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn opposite_voters_cancel() {
        let s = ScoreMatrix::from_rows(
            &[vec![0.4, -0.4], vec![-0.9, 0.9]],
            vec![1, -1],
        )
        .unwrap();
        assert!(sum_vote(&s).iter().all(|&v| v == 0.0));
    }

    /// Train sample whose two voters have MAPs 1 and 1/3: voter 1 ranks the
    /// positive first, voter 2 ranks it last of three.
    fn map_skewed_train() -> ScoreMatrix<f64> {
        ScoreMatrix::from_rows(
            &[vec![0.9, 0.1], vec![0.5, 0.5], vec![0.1, 0.9]],
            vec![1, -1, -1],
        )
        .unwrap()
    }

    #[test]
    fn map_weights_normalize() {
        let w = map_weights(&map_skewed_train()).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-12);
        assert!((w[1] - 0.25).abs() < 1e-12);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn equal_maps_reduce_to_scaled_sum() {
        // both voters rank the positive first: MAP 1 each, weights 1/2
        let train = ScoreMatrix::from_rows(
            &[vec![0.9, 0.8], vec![0.1, 0.2]],
            vec![1, -1],
        )
        .unwrap();
        let eval: ScoreMatrix<f64> = ScoreMatrix::from_rows(&[vec![0.6, 0.2]], vec![1]).unwrap();
        let weighted = map_weighted_vote(&train, &eval).unwrap();
        let summed = sum_vote(&eval);
        assert!((weighted[0] - summed[0] / 2.0).abs() < 1e-12);
    }

    #[test]
    fn map_weighted_vote_arithmetic() {
        // voter MAPs: v1 ranks both positives on top -> 1; v2 and v3 place
        // the positives at ranks 2 and 4 -> (1/2 + 2/4)/2 = 1/2 each.
        // Normalized weights: (0.5, 0.25, 0.25).
        let train = ScoreMatrix::from_rows(
            &[
                vec![0.9, 0.8, 0.6],
                vec![0.8, 0.6, 0.8],
                vec![0.1, 0.9, 0.9],
                vec![0.2, 0.7, 0.7],
            ],
            vec![1, 1, -1, -1],
        )
        .unwrap();
        let w = map_weights(&train).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.25).abs() < 1e-12);
        assert!((w[2] - 0.25).abs() < 1e-12);

        // weights (0.5, 0.25, 0.25) on row (1, -1, 1) give 0.5
        let eval: ScoreMatrix<f64> = ScoreMatrix::from_rows(&[vec![1.0, -1.0, 1.0]], vec![1]).unwrap();
        let v = map_weighted_vote(&train, &eval).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn best_confidence_picks_largest_magnitude() {
        let s = ScoreMatrix::from_rows(
            &[vec![0.3, -0.9, 0.5], vec![0.4, -0.4, 0.0], vec![0.0, 0.0, 0.0]],
            vec![1, -1, 1],
        )
        .unwrap();
        let v = best_confidence_vote(&s);
        assert_eq!(v[0], -0.9);
        assert_eq!(v[1], 0.4); // tie resolves to the first voter
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn h_best_maximizes_training_map() {
        // voter 2 of 3 has the strictly highest MAP
        let s = ScoreMatrix::from_rows(
            &[vec![0.1, 0.9, 0.5], vec![0.9, 0.1, 0.4], vec![0.5, 0.2, 0.9]],
            vec![1, -1, -1],
        )
        .unwrap();
        assert_eq!(h_best(&s).unwrap(), 1);

        let single = ScoreMatrix::from_rows(&[vec![0.4], vec![0.2]], vec![1, -1]).unwrap();
        assert_eq!(h_best(&single).unwrap(), 0);
    }

    #[test]
    fn h_best_vs_reversed_voter() {
        // voter 0 is the metrics module's 4-example instance (MAP 5/6);
        // voter 1 reverses it (positives at ranks 2 and 4, MAP 1/2): voter 0 wins.
        let s = ScoreMatrix::from_rows(
            &[
                vec![0.9, 0.6],
                vec![0.8, 0.7],
                vec![0.7, 0.8],
                vec![0.6, 0.9],
            ],
            vec![1, -1, 1, -1],
        )
        .unwrap();
        assert_eq!(h_best(&s).unwrap(), 0);
    }

    #[test]
    fn h_best_requires_positives() {
        let s = ScoreMatrix::from_rows(&[vec![0.4], vec![0.2]], vec![-1, -1]).unwrap();
        assert!(matches!(h_best(&s), Err(FusionError::UndefinedMap)));
    }

    #[test]
    fn baseline_models_predict() {
        let train = map_skewed_train();
        for algorithm in [
            Algorithm::Sum,
            Algorithm::MapWeighted,
            Algorithm::BestConfidence,
            Algorithm::HBest,
        ] {
            let model = fit_baseline(algorithm, &train).unwrap();
            assert_eq!(model.voter_count(), train.voters());
            let scores = crate::mincq::vote_scores(&model, &train).unwrap();
            assert_eq!(scores.len(), train.examples());
        }
        assert!(matches!(
            fit_baseline(Algorithm::MinCq, &train),
            Err(FusionError::InvalidProblem(_))
        ));
    }

    #[test]
    fn h_best_model_votes_with_single_voter() {
        let train = map_skewed_train();
        let model = fit_baseline(Algorithm::HBest, &train).unwrap();
        let scores = crate::mincq::vote_scores(&model, &train).unwrap();
        for j in 0..train.examples() {
            assert_eq!(scores[j], train.score(j, 0));
        }
    }
}
