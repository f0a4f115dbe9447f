//! Synthetic multimodal score generator for desk-scale experiments.
//!
//! The stream is fully determined by the spec and the seed:
//! 1. `round(examples * positive_ratio)` labels are set to +1, the rest to
//!    -1, then Fisher-Yates shuffled with a ChaCha8 RNG seeded by `seed`.
//! 2. Per example (row order), one standard-normal draw per voter (column
//!    order) forms the raw noise vector.
//! 3. Each shared-noise entry, in declaration order, remixes
//!    `eps[b] = mixing * eps[a] + sqrt(1 - mixing^2) * eps[b]`.
//! 4. Voter scores are `quality * label + noise_sd * eps`, clamped to
//!    [-3, 3] to keep the downstream QP scaling tame.
//!
//! Reruns with one seed are bit-identical; other implementations of the same
//! recipe reproduce the stream distributionally, not bit-for-bit.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FusionError, Result};
use crate::linalg::Mat;
use crate::num::Real;
use crate::types::ScoreMatrix;

/// Score range the generator clamps to.
pub const SCORE_CLAMP: f64 = 3.0;

/// One synthetic voter: mean signal strength and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoterSpec {
    /// Signal multiplier on the label; negative flips the voter.
    pub quality: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
}

/// Correlates the noise of voter `second` with voter `first` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedNoise {
    pub first: usize,
    pub second: usize,
    /// Correlation strength in [0, 1]; 1.0 copies the noise source.
    pub mixing: f64,
}

/// Full generator specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub examples: usize,
    pub positive_ratio: f64,
    pub voters: Vec<VoterSpec>,
    pub shared: Vec<SharedNoise>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.voters.is_empty() {
            return Err(FusionError::InvalidHyperparameter {
                name: "voters",
                value: 0.0,
                reason: "at least one voter required",
            });
        }
        if self.examples < 2 {
            return Err(FusionError::InvalidHyperparameter {
                name: "examples",
                value: self.examples as f64,
                reason: "at least two examples required",
            });
        }
        if !(self.positive_ratio > 0.0 && self.positive_ratio < 1.0) {
            return Err(FusionError::InvalidHyperparameter {
                name: "positive_ratio",
                value: self.positive_ratio,
                reason: "must lie strictly between 0 and 1",
            });
        }
        for v in &self.voters {
            if !v.quality.is_finite() {
                return Err(FusionError::InvalidHyperparameter {
                    name: "quality",
                    value: v.quality,
                    reason: "must be finite",
                });
            }
            if !(v.noise.is_finite() && v.noise >= 0.0) {
                return Err(FusionError::InvalidHyperparameter {
                    name: "noise",
                    value: v.noise,
                    reason: "must be finite and nonnegative",
                });
            }
        }
        for s in &self.shared {
            if s.first >= self.voters.len() || s.second >= self.voters.len() || s.first == s.second
            {
                return Err(FusionError::InvalidHyperparameter {
                    name: "shared",
                    value: s.second as f64,
                    reason: "voter indices must be distinct and in range",
                });
            }
            if !(0.0..=1.0).contains(&s.mixing) {
                return Err(FusionError::InvalidHyperparameter {
                    name: "mixing",
                    value: s.mixing,
                    reason: "must lie in [0, 1]",
                });
            }
        }
        Ok(())
    }

    /// Parses the flat `key=value` config format:
    ///
    /// ```text
    /// examples=500
    /// positive_ratio=0.5
    /// voter.1.quality=0.9
    /// voter.1.noise=0.3
    /// shared.1=1,2,0.8     # first voter, second voter, mixing
    /// ```
    ///
    /// Voter and shared indices are 1-based and must be contiguous; blank
    /// lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut examples = None;
        let mut positive_ratio = None;
        let mut quality: Vec<Option<(u64, f64)>> = Vec::new();
        let mut noise: Vec<Option<f64>> = Vec::new();
        let mut shared: Vec<(u64, SharedNoise)> = Vec::new();

        let bad = |line: u64, message: String| FusionError::DataFormat { line, message };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx as u64 + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected key=value, got {content:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let parse_f64 = |line: u64, v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(line, format!("invalid number {v:?}")))
            };
            if key == "examples" {
                examples = Some(value.parse::<usize>().map_err(|_| {
                    bad(line, format!("invalid example count {value:?}"))
                })?);
            } else if key == "positive_ratio" {
                positive_ratio = Some(parse_f64(line, value)?);
            } else if let Some(rest) = key.strip_prefix("voter.") {
                let (index, field) = rest
                    .split_once('.')
                    .ok_or_else(|| bad(line, format!("expected voter.<k>.<field>, got {key:?}")))?;
                let k: usize = index
                    .parse()
                    .map_err(|_| bad(line, format!("invalid voter index {index:?}")))?;
                if k == 0 {
                    return Err(bad(line, "voter indices start at 1".into()));
                }
                if quality.len() < k {
                    quality.resize(k, None);
                    noise.resize(k, None);
                }
                match field {
                    "quality" => quality[k - 1] = Some((line, parse_f64(line, value)?)),
                    "noise" => noise[k - 1] = Some(parse_f64(line, value)?),
                    other => return Err(bad(line, format!("unknown voter field {other:?}"))),
                }
            } else if key.starts_with("shared.") {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(bad(line, "shared entries are <first>,<second>,<mixing>".into()));
                }
                let first: usize = parts[0]
                    .parse()
                    .map_err(|_| bad(line, format!("invalid voter index {:?}", parts[0])))?;
                let second: usize = parts[1]
                    .parse()
                    .map_err(|_| bad(line, format!("invalid voter index {:?}", parts[1])))?;
                if first == 0 || second == 0 {
                    return Err(bad(line, "voter indices start at 1".into()));
                }
                shared.push((
                    line,
                    SharedNoise {
                        first: first - 1,
                        second: second - 1,
                        mixing: parse_f64(line, parts[2])?,
                    },
                ));
            } else {
                return Err(bad(line, format!("unknown key {key:?}")));
            }
        }

        let examples = examples.ok_or_else(|| bad(0, "missing examples".into()))?;
        let positive_ratio =
            positive_ratio.ok_or_else(|| bad(0, "missing positive_ratio".into()))?;
        let mut voters = Vec::with_capacity(quality.len());
        for (k, q) in quality.iter().enumerate() {
            let &(line, q) = q.as_ref().ok_or_else(|| {
                bad(0, format!("voter.{}.quality missing (indices must be contiguous)", k + 1))
            })?;
            let _ = line;
            voters.push(VoterSpec {
                quality: q,
                noise: noise[k].unwrap_or(0.0),
            });
        }
        let spec = SynthSpec {
            examples,
            positive_ratio,
            voters,
            shared: shared.into_iter().map(|(_, s)| s).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Generates a score matrix; deterministic per (spec, seed).
pub fn generate<F: Real>(spec: &SynthSpec, seed: u64) -> Result<ScoreMatrix<F>> {
    spec.validate()?;
    let m = spec.examples;
    let n = spec.voters.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_pos = ((m as f64 * spec.positive_ratio).round() as usize).min(m);
    let mut labels: Vec<i8> = Vec::with_capacity(m);
    labels.extend(std::iter::repeat(1).take(n_pos));
    labels.extend(std::iter::repeat(-1).take(m - n_pos));
    labels.shuffle(&mut rng);

    let mut rows: Vec<Vec<F>> = Vec::with_capacity(m);
    let mut eps = vec![0.0f64; n];
    for &y in &labels {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for sn in &spec.shared {
            eps[sn.second] =
                sn.mixing * eps[sn.first] + (1.0 - sn.mixing * sn.mixing).sqrt() * eps[sn.second];
        }
        rows.push(
            spec.voters
                .iter()
                .zip(&eps)
                .map(|(v, &e)| {
                    let raw = v.quality * y as f64 + v.noise * e;
                    F::of(raw.clamp(-SCORE_CLAMP, SCORE_CLAMP))
                })
                .collect(),
        );
    }
    let voter_names = (1..=n).map(|i| format!("v{i}")).collect();
    let example_ids = (1..=m).map(|j| format!("e{j}")).collect();
    ScoreMatrix::new(Mat::from_rows(&rows), labels, voter_names, example_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::diversity_matrix;

    fn spec(voters: Vec<VoterSpec>) -> SynthSpec {
        SynthSpec {
            examples: 10,
            positive_ratio: 0.5,
            voters,
            shared: Vec::new(),
        }
    }

    #[test]
    fn noiseless_perfect_voter_copies_labels() {
        let s = generate::<f64>(&spec(vec![VoterSpec { quality: 1.0, noise: 0.0 }]), 3).unwrap();
        for j in 0..s.examples() {
            assert_eq!(s.score(j, 0), s.label(j) as f64);
        }
        let votes = crate::baselines::sum_vote(&s);
        assert_eq!(crate::metrics::empirical_risk(&votes, s.labels()).unwrap(), 0.0);
    }

    #[test]
    fn trainable_mincq_reaches_zero_risk_on_clean_voters() {
        // a flipped third voter keeps the margin equality feasible
        let spec = SynthSpec {
            examples: 20,
            positive_ratio: 0.5,
            voters: vec![
                VoterSpec { quality: 1.0, noise: 0.0 },
                VoterSpec { quality: 1.0, noise: 0.0 },
                VoterSpec { quality: -1.0, noise: 0.0 },
            ],
            shared: Vec::new(),
        };
        let s = generate::<f64>(&spec, 11).unwrap();
        let model = crate::mincq::train(&s, 0.01, &crate::qp::SolverConfig::default()).unwrap();
        let votes = crate::mincq::vote_scores(&model, &s).unwrap();
        assert_eq!(crate::metrics::empirical_risk(&votes, s.labels()).unwrap(), 0.0);
    }

    #[test]
    fn flipped_voter_agreement_is_minus_one() {
        let s = generate::<f64>(&spec(vec![VoterSpec { quality: -1.0, noise: 0.0 }]), 5).unwrap();
        let m = s.examples() as f64;
        let agreement: f64 = (0..s.examples())
            .map(|j| s.label(j) as f64 * s.score(j, 0))
            .sum::<f64>()
            / m;
        assert_eq!(agreement, -1.0);
    }

    #[test]
    fn fully_shared_noise_makes_voters_identical() {
        let spec = SynthSpec {
            examples: 2000,
            positive_ratio: 0.5,
            voters: vec![
                VoterSpec { quality: 0.5, noise: 1.0 },
                VoterSpec { quality: 0.5, noise: 1.0 },
            ],
            shared: vec![SharedNoise { first: 0, second: 1, mixing: 1.0 }],
        };
        let s = generate::<f64>(&spec, 9).unwrap();
        let div = diversity_matrix(&s);
        assert!((div[(0, 1)] - div[(0, 0)]).abs() <= 0.05);
        assert!((div[(0, 1)] - div[(1, 1)]).abs() <= 0.05);
    }

    #[test]
    fn label_counts_match_rounded_ratio() {
        let mut spec = spec(vec![VoterSpec { quality: 0.5, noise: 0.1 }]);
        spec.examples = 10;
        spec.positive_ratio = 0.5;
        let s = generate::<f64>(&spec, 1).unwrap();
        assert_eq!(s.labels().iter().filter(|&&y| y == 1).count(), 5);

        spec.positive_ratio = 0.33;
        let s = generate::<f64>(&spec, 1).unwrap();
        assert_eq!(s.labels().iter().filter(|&&y| y == 1).count(), 3);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = spec(vec![
            VoterSpec { quality: 0.9, noise: 0.3 },
            VoterSpec { quality: 0.2, noise: 1.0 },
        ]);
        let a = generate::<f64>(&spec, 42).unwrap();
        let b = generate::<f64>(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = generate::<f64>(&spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scores_are_clamped() {
        let s = generate::<f64>(&spec(vec![VoterSpec { quality: 5.0, noise: 0.0 }]), 7).unwrap();
        for j in 0..s.examples() {
            assert!(s.score(j, 0).abs() <= SCORE_CLAMP);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut bad = spec(vec![VoterSpec { quality: 1.0, noise: 0.0 }]);
        bad.positive_ratio = 0.0;
        assert!(generate::<f64>(&bad, 1).is_err());

        let mut bad = spec(vec![VoterSpec { quality: 1.0, noise: -0.1 }]);
        bad.positive_ratio = 0.5;
        assert!(generate::<f64>(&bad, 1).is_err());

        let bad = SynthSpec {
            examples: 4,
            positive_ratio: 0.5,
            voters: vec![VoterSpec { quality: 1.0, noise: 0.0 }],
            shared: vec![SharedNoise { first: 0, second: 1, mixing: 0.5 }],
        };
        assert!(generate::<f64>(&bad, 1).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let text = "\
# two voters, one shared noise source
examples=100
positive_ratio=0.4
voter.1.quality=0.9
voter.1.noise=0.3
voter.2.quality=-0.5   # flipped
voter.2.noise=1.0
shared.1=1,2,0.8
";
        let spec = SynthSpec::parse(text).unwrap();
        assert_eq!(spec.examples, 100);
        assert_eq!(spec.positive_ratio, 0.4);
        assert_eq!(spec.voters.len(), 2);
        assert_eq!(spec.voters[1].quality, -0.5);
        assert_eq!(spec.shared[0].first, 0);
        assert_eq!(spec.shared[0].second, 1);
        assert_eq!(spec.shared[0].mixing, 0.8);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = SynthSpec::parse("examples=10\npositive_ratio=oops\nvoter.1.quality=1\n")
            .unwrap_err();
        match err {
            FusionError::DataFormat { line, .. } => assert_eq!(line, 2),
            other => panic!("expected data format error, got {other:?}"),
        }
    }

    #[test]
    fn parse_requires_contiguous_voters() {
        let err = SynthSpec::parse("examples=10\npositive_ratio=0.5\nvoter.2.quality=1\n")
            .unwrap_err();
        assert!(matches!(err, FusionError::DataFormat { .. }));
    }
}
