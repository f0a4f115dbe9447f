//! Evaluation quantities: empirical risk, margin moments, C-bound,
//! diversity, Prec@j, MAP and the paired t-test.
//!
//! Ranking uses one deterministic order everywhere: descending score, ties
//! broken by ascending example index. Zero vote score counts as an error in
//! the risk (the sign convention maps it to +1 for prediction, but a
//! zero-margin example is misclassified by definition).

use std::borrow::Cow;

use crate::error::{FusionError, Result};
use crate::linalg::Mat;
use crate::num::Real;
use crate::types::{EvalReport, FusionModel, ScoreMatrix};

/// First and second empirical moments of the margin `y H(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginMoments<F> {
    pub first: F,
    pub second: F,
}

fn check_lengths<F: Real>(vote_scores: &[F], labels: &[i8]) -> Result<()> {
    if vote_scores.is_empty() {
        return Err(FusionError::EmptySample);
    }
    if vote_scores.len() != labels.len() {
        return Err(FusionError::ShapeMismatch {
            what: "vote scores vs labels",
            expected: labels.len(),
            got: vote_scores.len(),
        });
    }
    Ok(())
}

/// Fraction of examples with `y H(x) <= 0`.
pub fn empirical_risk<F: Real>(vote_scores: &[F], labels: &[i8]) -> Result<F> {
    check_lengths(vote_scores, labels)?;
    let errors = vote_scores
        .iter()
        .zip(labels)
        .filter(|(&h, &y)| h * F::of(y as f64) <= F::zero())
        .count();
    Ok(F::of(errors as f64) / F::of(vote_scores.len() as f64))
}

/// Mean margin and mean squared margin.
pub fn margin_moments<F: Real>(vote_scores: &[F], labels: &[i8]) -> Result<MarginMoments<F>> {
    check_lengths(vote_scores, labels)?;
    let inv_m = F::one() / F::of(vote_scores.len() as f64);
    let mut first = F::zero();
    let mut second = F::zero();
    for (&h, &y) in vote_scores.iter().zip(labels) {
        let margin = h * F::of(y as f64);
        first = first + margin;
        second = second + margin * margin;
    }
    Ok(MarginMoments {
        first: first * inv_m,
        second: second * inv_m,
    })
}

/// C-bound `1 - first^2 / second`, defined for a positive first moment.
///
/// Genuine empirical moments satisfy `first^2 <= second`, so the value lands
/// in `[0, 1]`; a tiny negative from rounding is clamped to zero.
pub fn c_bound<F: Real>(first: F, second: F) -> Result<F> {
    if first <= F::zero() {
        return Err(FusionError::UndefinedBound {
            first_moment: first.widen(),
        });
    }
    if second <= F::zero() {
        return Err(FusionError::DegenerateMoments);
    }
    let value = F::one() - first * first / second;
    if value < -F::of(1e-9) {
        return Err(FusionError::DegenerateMoments);
    }
    Ok(value.max(F::zero()))
}

/// Pairwise voter disagreement `div(h_i, h_i') = (1/m) sum_j h_i(x_j) h_i'(x_j)`.
pub fn diversity_matrix<F: Real>(s: &ScoreMatrix<F>) -> Mat<F> {
    let n = s.voters();
    let m = s.examples();
    let inv_m = F::one() / F::of(m as f64);
    let mut div = Mat::zeros(n, n);
    for i in 0..n {
        for i2 in i..n {
            let mut acc = F::zero();
            for j in 0..m {
                acc = acc + s.score(j, i) * s.score(j, i2);
            }
            let v = acc * inv_m;
            div[(i, i2)] = v;
            div[(i2, i)] = v;
        }
    }
    div
}

/// Second margin moment through the diversity decomposition
/// `sum_i sum_i' q_i q_i' div(h_i, h_i')`, for signed weights `q`.
pub fn second_moment_via_diversity<F: Real>(q: &[F], div: &Mat<F>) -> Result<F> {
    if div.rows() != q.len() || div.cols() != q.len() {
        return Err(FusionError::ShapeMismatch {
            what: "diversity matrix vs weights",
            expected: q.len(),
            got: div.rows(),
        });
    }
    Ok(div.quad_form(q))
}

/// Indices sorted by descending score, ties broken by ascending index.
pub fn ranked_indices<F: Real>(scores: &[F]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    idx
}

/// Fraction of positives among the top `j` ranked examples (`1 <= j <= m`).
pub fn precision_at<F: Real>(scores: &[F], labels: &[i8], j: usize) -> Result<F> {
    check_lengths(scores, labels)?;
    let m = scores.len();
    if j == 0 || j > m {
        return Err(FusionError::RankOutOfRange { j, m });
    }
    let ranked = ranked_indices(scores);
    let positives = ranked[..j].iter().filter(|&&r| labels[r] == 1).count();
    Ok(F::of(positives as f64) / F::of(j as f64))
}

/// Mean of Prec@j over the rank positions of the positive examples.
pub fn mean_average_precision<F: Real>(scores: &[F], labels: &[i8]) -> Result<F> {
    check_lengths(scores, labels)?;
    let ranked = ranked_indices(scores);
    let mut positives_seen = 0usize;
    let mut acc = F::zero();
    for (rank0, &r) in ranked.iter().enumerate() {
        if labels[r] == 1 {
            positives_seen += 1;
            acc = acc + F::of(positives_seen as f64) / F::of((rank0 + 1) as f64);
        }
    }
    if positives_seen == 0 {
        return Err(FusionError::UndefinedMap);
    }
    Ok(acc / F::of(positives_seen as f64))
}

/// Paired two-sided Student t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t_stat: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test of `metric_a` against `metric_b`.
pub fn paired_t_test<F: Real>(metric_a: &[F], metric_b: &[F]) -> Result<TTest> {
    if metric_a.len() != metric_b.len() {
        return Err(FusionError::ShapeMismatch {
            what: "paired sequences",
            expected: metric_a.len(),
            got: metric_b.len(),
        });
    }
    let n = metric_a.len();
    if n < 2 {
        return Err(FusionError::EmptySample);
    }
    let d: Vec<f64> = metric_a
        .iter()
        .zip(metric_b)
        .map(|(&a, &b)| a.widen() - b.widen())
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1e-300) {
        return Err(FusionError::DegenerateTest);
    }
    let t = mean / (std / (n as f64).sqrt());
    let df = n as f64 - 1.0;
    let p = regularized_beta(df / 2.0, 0.5, df / (df + t * t));
    Ok(TTest {
        t_stat: t,
        p_value: p,
    })
}

/// ln Gamma by the Lanczos series (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via the continued fraction
/// (modified Lentz), absolute error well below 1e-10 in the range used here.
fn regularized_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Full per-sample evaluation of a trained model: risk, MAP, margin moments,
/// C-bound when defined, and the diversity matrix of the voters the model
/// actually votes over (kernel voters when a layer is present).
pub fn evaluate<F: Real>(model: &FusionModel<F>, s: &ScoreMatrix<F>) -> Result<EvalReport<F>> {
    let voting = crate::mincq::voting_matrix(model, s)?;
    let scores = crate::mincq::vote_scores_on(model, &voting)?;
    let labels = s.labels();
    let risk = empirical_risk(&scores, labels)?;
    let map = mean_average_precision(&scores, labels)?;
    let MarginMoments { first, second } = margin_moments(&scores, labels)?;
    let c = if first > F::zero() && second > F::zero() {
        Some(c_bound(first, second)?)
    } else {
        None
    };
    let diversity = match &voting {
        Cow::Borrowed(v) => diversity_matrix(*v),
        Cow::Owned(v) => diversity_matrix(v),
    };
    Ok(EvalReport {
        risk,
        map,
        first_moment: first,
        second_moment: second,
        c_bound: c,
        diversity,
    })
}
