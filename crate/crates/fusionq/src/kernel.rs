//! Non-linear stacking layer: each example is represented by its vector of
//! base scores, and every retained training example becomes one RBF voter
//! `k(., x) = exp(-gamma ||z - z_x||^2)` over standardized score vectors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FusionError, Result};
use crate::linalg::Mat;
use crate::num::Real;
use crate::types::ScoreMatrix;

/// Fitted RBF voter set: kernel width, anchors in standardized score space,
/// and the training standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelLayer<F> {
    gamma: F,
    /// Per-voter mean of the training scores.
    means: Vec<F>,
    /// Per-voter standard deviation (population) of the training scores.
    stds: Vec<F>,
    /// One standardized score vector per retained training example.
    anchors: Mat<F>,
    /// Example id of each anchor, used to name the kernel voters.
    anchor_ids: Vec<String>,
}

impl<F: Real> KernelLayer<F> {
    /// Rebuilds a layer from stored parts (model deserialization path).
    pub fn from_parts(
        gamma: F,
        means: Vec<F>,
        stds: Vec<F>,
        anchors: Mat<F>,
        anchor_ids: Vec<String>,
    ) -> Result<Self> {
        if gamma <= F::zero() || !gamma.is_finite() {
            return Err(FusionError::InvalidHyperparameter {
                name: "gamma",
                value: gamma.widen(),
                reason: "must be a positive real",
            });
        }
        if means.len() != stds.len() || anchors.cols() != means.len() {
            return Err(FusionError::ShapeMismatch {
                what: "kernel standardization vs anchor dimension",
                expected: anchors.cols(),
                got: means.len(),
            });
        }
        if anchors.rows() != anchor_ids.len() {
            return Err(FusionError::ShapeMismatch {
                what: "anchor ids vs anchor rows",
                expected: anchors.rows(),
                got: anchor_ids.len(),
            });
        }
        if stds.iter().any(|s| *s <= F::zero()) {
            return Err(FusionError::InvalidProblem(
                "kernel standardization deviation must be positive".into(),
            ));
        }
        Ok(Self {
            gamma,
            means,
            stds,
            anchors,
            anchor_ids,
        })
    }

    /// Fits on the full training sample: every row becomes an anchor.
    pub fn fit(s_train: &ScoreMatrix<F>, gamma: F) -> Result<Self> {
        Self::fit_capped(s_train, gamma, s_train.examples(), 0)
    }

    /// Fits with at most `max_anchors` anchors, chosen by a deterministic
    /// uniform subsample under `seed`. Standardization statistics always come
    /// from the full training sample.
    pub fn fit_capped(
        s_train: &ScoreMatrix<F>,
        gamma: F,
        max_anchors: usize,
        seed: u64,
    ) -> Result<Self> {
        if gamma <= F::zero() || !gamma.is_finite() {
            return Err(FusionError::InvalidHyperparameter {
                name: "gamma",
                value: gamma.widen(),
                reason: "must be a positive real",
            });
        }
        if max_anchors == 0 {
            return Err(FusionError::InvalidHyperparameter {
                name: "max_anchors",
                value: 0.0,
                reason: "at least one anchor required",
            });
        }
        let m = s_train.examples();
        let n = s_train.voters();
        let inv_m = F::one() / F::of(m as f64);
        let mut means = vec![F::zero(); n];
        let mut stds = vec![F::zero(); n];
        for i in 0..n {
            let mut sum = F::zero();
            for j in 0..m {
                sum = sum + s_train.score(j, i);
            }
            means[i] = sum * inv_m;
            let mut var = F::zero();
            for j in 0..m {
                let d = s_train.score(j, i) - means[i];
                var = var + d * d;
            }
            let std = (var * inv_m).sqrt();
            if std <= F::of(1e-12) {
                return Err(FusionError::DegenerateStandardization {
                    voter: s_train.voter_names()[i].clone(),
                });
            }
            stds[i] = std;
        }

        let mut picked: Vec<usize> = (0..m).collect();
        if max_anchors < m {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            picked.shuffle(&mut rng);
            picked.truncate(max_anchors);
            picked.sort_unstable();
        }
        let anchors = Mat::from_fn(picked.len(), n, |a, i| {
            (s_train.score(picked[a], i) - means[i]) / stds[i]
        });
        let anchor_ids = picked
            .iter()
            .map(|&j| s_train.example_ids()[j].clone())
            .collect();
        Ok(Self {
            gamma,
            means,
            stds,
            anchors,
            anchor_ids,
        })
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    /// Base voter dimension the layer expects.
    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.rows()
    }

    pub fn anchors(&self) -> &Mat<F> {
        &self.anchors
    }

    pub fn anchor_ids(&self) -> &[String] {
        &self.anchor_ids
    }

    pub fn means(&self) -> &[F] {
        &self.means
    }

    pub fn stds(&self) -> &[F] {
        &self.stds
    }

    /// Kernel voter names, derived from the anchor example ids.
    pub fn voter_names(&self) -> Vec<String> {
        self.anchor_ids.iter().map(|id| format!("rbf:{id}")).collect()
    }

    /// Standardizes one base score row.
    fn standardize(&self, row: &[F]) -> Vec<F> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&mu, &sd))| (v - mu) / sd)
            .collect()
    }

    /// Expands a base-score sample into kernel voter outputs; labels and
    /// example ids pass through.
    pub fn transform(&self, s: &ScoreMatrix<F>) -> Result<ScoreMatrix<F>> {
        if s.voters() != self.dim() {
            return Err(FusionError::ShapeMismatch {
                what: "base voters vs kernel layer dimension",
                expected: self.dim(),
                got: s.voters(),
            });
        }
        let m = s.examples();
        let rows: Vec<Vec<F>> = (0..m)
            .map(|j| {
                let z = self.standardize(s.row(j));
                (0..self.anchor_count())
                    .map(|a| {
                        let mut sq = F::zero();
                        for (&zi, &ai) in z.iter().zip(self.anchors.row(a)) {
                            let d = zi - ai;
                            sq = sq + d * d;
                        }
                        (-self.gamma * sq).exp()
                    })
                    .collect()
            })
            .collect();
        ScoreMatrix::new(
            Mat::from_rows(&rows),
            s.labels().to_vec(),
            self.voter_names(),
            s.example_ids().to_vec(),
        )
    }
}

/// Default RBF width grid `{2^k / n : k in -3..=3}` for `n` base voters.
pub fn default_gamma_grid(n: usize) -> Vec<f64> {
    (-3..=3).map(|k| 2f64.powi(k) / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train_sample() -> ScoreMatrix<f64> {
        ScoreMatrix::from_rows(
            &[vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0], vec![-1.0, -1.0]],
            vec![1, -1, 1, -1],
        )
        .unwrap()
    }

    #[test]
    fn one_anchor_per_training_row() {
        let s = train_sample();
        let layer = KernelLayer::fit(&s, 1.0).unwrap();
        assert_eq!(layer.anchor_count(), s.examples());
        assert_eq!(layer.dim(), 2);
    }

    #[test]
    fn non_positive_gamma_rejected() {
        let s = train_sample();
        for gamma in [0.0, -1.5] {
            assert!(matches!(
                KernelLayer::fit(&s, gamma),
                Err(FusionError::InvalidHyperparameter { name: "gamma", .. })
            ));
        }
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_deviation() {
        let s = train_sample();
        let layer = KernelLayer::fit(&s, 1.0).unwrap();
        let m = layer.anchor_count();
        for i in 0..layer.dim() {
            let col: Vec<f64> = (0..m).map(|a| layer.anchors()[(a, i)]).collect();
            let mean: f64 = col.iter().sum::<f64>() / m as f64;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_voter_rejected_by_name() {
        let s = ScoreMatrix::from_rows(&[vec![0.7, 1.0], vec![0.7, -1.0]], vec![1, -1]).unwrap();
        match KernelLayer::fit(&s, 1.0) {
            Err(FusionError::DegenerateStandardization { voter }) => assert_eq!(voter, "v1"),
            other => panic!("expected degenerate standardization, got {other:?}"),
        }
    }

    #[test]
    fn own_anchor_evaluates_to_one() {
        let s = train_sample();
        let layer = KernelLayer::fit(&s, 0.8).unwrap();
        let out = layer.transform(&s).unwrap();
        for j in 0..s.examples() {
            assert!((out.score(j, j) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_gamma_sends_distinct_points_to_zero() {
        let s = train_sample();
        let layer = KernelLayer::fit(&s, 1e4).unwrap();
        let out = layer.transform(&s).unwrap();
        for j in 0..s.examples() {
            for a in 0..s.examples() {
                if a != j {
                    assert!(out.score(j, a) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unit_distance_kernel_value() {
        // Anchors from a sample whose columns already have mean 0 and
        // deviation 1, so standardization is the identity.
        let s = ScoreMatrix::from_rows(
            &[vec![1.0, 1.0], vec![-1.0, -1.0]],
            vec![1, -1],
        )
        .unwrap();
        let layer = KernelLayer::fit(&s, 1.0).unwrap();
        // probe z = (0, 0): squared distance to either anchor is 2
        let probe = ScoreMatrix::from_rows(&[vec![0.0, 0.0]], vec![1]).unwrap();
        let out = layer.transform(&probe).unwrap();
        assert!((out.score(0, 0) - (-2.0f64).exp()).abs() < 1e-12);
        // probe offset by one standardized unit along the first axis only
        let probe = ScoreMatrix::from_rows(&[vec![0.0, 1.0]], vec![1]).unwrap();
        let out = layer.transform(&probe).unwrap();
        assert!((out.score(0, 0) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn capped_fit_is_deterministic_and_keeps_row_order() {
        let s = train_sample();
        let a = KernelLayer::fit_capped(&s, 1.0, 2, 42).unwrap();
        let b = KernelLayer::fit_capped(&s, 1.0, 2, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.anchor_count(), 2);
        // ids ascend because the subsample is re-sorted by row index
        let ids = a.anchor_ids();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let layer = KernelLayer::fit(&train_sample(), 1.0).unwrap();
        let s = ScoreMatrix::from_rows(&[vec![0.0, 0.0, 0.0]], vec![1]).unwrap();
        assert!(matches!(
            layer.transform(&s),
            Err(FusionError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn default_grid_spans_the_documented_range() {
        let grid = default_gamma_grid(2);
        assert_eq!(grid.len(), 7);
        assert!((grid[0] - 0.0625).abs() < 1e-15);
        assert!((grid[6] - 4.0).abs() < 1e-15);
    }
}
