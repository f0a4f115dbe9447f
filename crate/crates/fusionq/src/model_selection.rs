//! The experimental protocol: stacking split, stratified k-fold
//! cross-validation over hyperparameter grids, selection by MAP.
//!
//! Grid points expand in a fixed order (keys alphabetical, values as given),
//! folds are stratified and seeded, and the selection reduces by maximum
//! mean validation MAP with ties going to the earliest grid point — the
//! whole pipeline is a pure function of (data, seed, config).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FusionError, Result};
use crate::kernel::KernelLayer;
use crate::metrics::mean_average_precision;
use crate::mincq;
use crate::num::Real;
use crate::qp::SolverConfig;
use crate::rank;
use crate::types::{Algorithm, FusionModel, ScoreMatrix};

/// The S'/S halves of a stacking split.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingSplit<F> {
    /// Half reserved for training the base classifiers.
    pub s_prime: ScoreMatrix<F>,
    /// Half the fusion combiner learns from.
    pub s_fusion: ScoreMatrix<F>,
}

impl<F: Real> StackingSplit<F> {
    /// Ranking algorithms need positives on both sides.
    pub fn ensure_positives(&self) -> Result<()> {
        for (name, side) in [("s_prime", &self.s_prime), ("s_fusion", &self.s_fusion)] {
            if !side.labels().iter().any(|&y| y == 1) {
                return Err(FusionError::StratificationFailure(format!(
                    "{name} received no positive examples"
                )));
            }
        }
        Ok(())
    }
}

/// Splits into disjoint, label-stratified halves (sizes differ by at most
/// one for odd m); deterministic per seed.
pub fn stacking_split<F: Real>(s: &ScoreMatrix<F>, seed: u64) -> Result<StackingSplit<F>> {
    let m = s.examples();
    if m < 2 {
        return Err(FusionError::StratificationFailure(
            "need at least two examples to split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = Vec::new();
    let mut negatives: Vec<usize> = Vec::new();
    for (j, &y) in s.labels().iter().enumerate() {
        if y == 1 {
            positives.push(j);
        } else {
            negatives.push(j);
        }
    }
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let prime_pos = positives.len().div_ceil(2);
    let prime_neg = m.div_ceil(2) - prime_pos;
    let mut prime_rows: Vec<usize> = positives[..prime_pos]
        .iter()
        .chain(&negatives[..prime_neg])
        .copied()
        .collect();
    let mut fusion_rows: Vec<usize> = positives[prime_pos..]
        .iter()
        .chain(&negatives[prime_neg..])
        .copied()
        .collect();
    prime_rows.sort_unstable();
    fusion_rows.sort_unstable();
    Ok(StackingSplit {
        s_prime: s.select_rows(&prime_rows)?,
        s_fusion: s.select_rows(&fusion_rows)?,
    })
}

/// One cross-validation fold: row indices of its two parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
}

/// Stratified k-fold assignment: shuffled positives and negatives are dealt
/// round-robin, so every fold's class mix tracks the sample's.
pub fn stratified_folds(labels: &[i8], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(FusionError::InvalidHyperparameter {
            name: "folds",
            value: folds as f64,
            reason: "at least two folds required",
        });
    }
    if labels.len() < folds {
        return Err(FusionError::StratificationFailure(format!(
            "{} examples cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = Vec::new();
    let mut negatives: Vec<usize> = Vec::new();
    for (j, &y) in labels.iter().enumerate() {
        if y == 1 {
            positives.push(j);
        } else {
            negatives.push(j);
        }
    }
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); folds];
    for (i, &row) in positives.iter().chain(&negatives).enumerate() {
        buckets[i % folds].push(row);
    }
    Ok((0..folds)
        .map(|k| {
            let mut val_rows = buckets[k].clone();
            val_rows.sort_unstable();
            let mut train_rows: Vec<usize> = buckets
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != k)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            train_rows.sort_unstable();
            Fold { train_rows, val_rows }
        })
        .collect())
}

/// Hyperparameter grid: name to candidate values.
pub type ParamGrid = BTreeMap<String, Vec<f64>>;

/// Concrete hyperparameter assignment.
pub type Params = BTreeMap<String, f64>;

/// Expands a grid into points: keys alphabetical, values in given order,
/// rightmost key fastest. An empty grid yields one empty point.
pub fn grid_points(grid: &ParamGrid) -> Vec<Params> {
    let keys: Vec<&String> = grid.keys().collect();
    let mut points = vec![Params::new()];
    for key in keys {
        let values = &grid[key];
        let mut next = Vec::with_capacity(points.len() * values.len().max(1));
        for point in &points {
            for &v in values {
                let mut p = point.clone();
                p.insert(key.clone(), v);
                next.push(p);
            }
        }
        points = next;
    }
    points
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// Worker threads for the fold x grid evaluations (1 = sequential).
    pub threads: usize,
    pub solver: SolverConfig,
    /// Optional cap on kernel anchors (deterministic subsample by `seed`).
    pub max_anchors: Option<usize>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            threads: 1,
            solver: SolverConfig::default(),
            max_anchors: None,
        }
    }
}

/// Per-grid-point cross-validation record.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub params: Params,
    /// Validation MAP per fold; `None` when the point was skipped.
    pub fold_map: Option<Vec<f64>>,
    pub mean_map: Option<f64>,
    /// Why the point was skipped (infeasible margin or degenerate kernel).
    pub skipped: Option<String>,
}

/// Cross-validation outcome: the winning parameters and the full table.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_params: Params,
    pub rows: Vec<GridRow>,
}

fn param<F: Real>(params: &Params, name: &'static str) -> Result<F> {
    params
        .get(name)
        .map(|&v| F::of(v))
        .ok_or(FusionError::InvalidHyperparameter {
            name,
            value: f64::NAN,
            reason: "required by this algorithm but missing from the grid",
        })
}

/// Trains one model with concrete hyperparameters. A `gamma` entry routes
/// the data through an RBF kernel layer fitted on `s` (anchors capped via
/// `max_anchors`, subsampled deterministically by `seed`).
pub fn fit_model<F: Real>(
    s: &ScoreMatrix<F>,
    algorithm: Algorithm,
    params: &Params,
    solver: &SolverConfig,
    max_anchors: Option<usize>,
    seed: u64,
) -> Result<FusionModel<F>> {
    let (data, layer) = match params.get("gamma") {
        Some(&gamma) => {
            let cap = max_anchors.unwrap_or(s.examples());
            let layer = KernelLayer::fit_capped(s, F::of(gamma), cap, seed)?;
            (layer.transform(s)?, Some(layer))
        }
        None => (s.clone(), None),
    };
    let mut model = match algorithm {
        Algorithm::MinCq => mincq::train(&data, param(params, "mu")?, solver)?,
        Algorithm::MinCqPw => {
            rank::train_pw(&data, param(params, "mu")?, param(params, "beta")?, solver)?
        }
        Algorithm::MinCqPwav => {
            rank::train_pwav(&data, param(params, "mu")?, param(params, "beta")?, solver)?
        }
        baseline => crate::baselines::fit_baseline(baseline, &data)?,
    };
    if let Some(layer) = layer {
        model.hyperparams.insert("gamma".into(), layer.gamma().widen());
        model.kernel = Some(layer);
    }
    Ok(model)
}

/// Whether an error means "skip this grid point" rather than "abort".
fn is_skippable(e: &FusionError) -> bool {
    matches!(
        e,
        FusionError::InfeasibleMargin { .. } | FusionError::DegenerateStandardization { .. }
    )
}

fn evaluate_cell<F: Real>(
    s: &ScoreMatrix<F>,
    algorithm: Algorithm,
    params: &Params,
    fold: &Fold,
    cfg: &CvConfig,
) -> Result<f64> {
    let train = s.select_rows(&fold.train_rows)?;
    let val = s.select_rows(&fold.val_rows)?;
    let model = fit_model(&train, algorithm, params, &cfg.solver, cfg.max_anchors, cfg.seed)?;
    let votes = mincq::vote_scores(&model, &val)?;
    Ok(mean_average_precision(&votes, val.labels())?.widen())
}

/// Stratified k-fold cross-validation selecting the grid point with the best
/// mean validation MAP. Grid points whose training is infeasible are skipped
/// and recorded; if all fail, `NoFeasibleModel`.
pub fn cross_validate<F: Real>(
    s: &ScoreMatrix<F>,
    algorithm: Algorithm,
    grid: &ParamGrid,
    cfg: &CvConfig,
) -> Result<CvOutcome> {
    let positives = s.labels().iter().filter(|&&y| y == 1).count();
    if positives < cfg.folds {
        return Err(FusionError::StratificationFailure(format!(
            "{positives} positives cannot give every one of {} validation folds a positive",
            cfg.folds
        )));
    }
    let folds = stratified_folds(s.labels(), cfg.folds, cfg.seed)?;
    let points = grid_points(grid);

    // Evaluate every (grid point, fold) cell; order-independent by indexing.
    let cells: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..folds.len()).map(move |k| (p, k)))
        .collect();
    let run = |&(p, k): &(usize, usize)| evaluate_cell(s, algorithm, &points[p], &folds[k], cfg);
    let results: Vec<Result<f64>> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| FusionError::Io(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            cells.par_iter().map(run).collect()
        })
    } else {
        cells.iter().map(run).collect()
    };

    let mut rows = Vec::with_capacity(points.len());
    for (p, params) in points.iter().enumerate() {
        let mut fold_map = Vec::with_capacity(folds.len());
        let mut skipped = None;
        for k in 0..folds.len() {
            match &results[p * folds.len() + k] {
                Ok(map) => fold_map.push(*map),
                Err(e) if is_skippable(e) => {
                    skipped = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e.clone()),
            }
        }
        let row = match skipped {
            Some(reason) => GridRow {
                params: params.clone(),
                fold_map: None,
                mean_map: None,
                skipped: Some(reason),
            },
            None => {
                let mean = fold_map.iter().sum::<f64>() / fold_map.len() as f64;
                GridRow {
                    params: params.clone(),
                    fold_map: Some(fold_map),
                    mean_map: Some(mean),
                    skipped: None,
                }
            }
        };
        rows.push(row);
    }

    let best_params = if points.len() == 1 {
        // a single grid point is returned regardless of its MAP
        points.into_iter().next().unwrap()
    } else {
        let mut best: Option<(usize, f64)> = None;
        for (p, row) in rows.iter().enumerate() {
            if let Some(mean) = row.mean_map {
                let better = match best {
                    Some((_, current)) => mean > current,
                    None => true,
                };
                if better {
                    best = Some((p, mean));
                }
            }
        }
        match best {
            Some((p, _)) => rows[p].params.clone(),
            None => return Err(FusionError::NoFeasibleModel),
        }
    };
    Ok(CvOutcome { best_params, rows })
}

/// Cross-validates, then retrains on the full fusion-training sample with
/// the winning parameters.
pub fn train_with_cv<F: Real>(
    s: &ScoreMatrix<F>,
    algorithm: Algorithm,
    grid: &ParamGrid,
    cfg: &CvConfig,
) -> Result<(FusionModel<F>, CvOutcome)> {
    let outcome = cross_validate(s, algorithm, grid, cfg)?;
    let model = fit_model(s, algorithm, &outcome.best_params, &cfg.solver, cfg.max_anchors, cfg.seed)?;
    Ok((model, outcome))
}
