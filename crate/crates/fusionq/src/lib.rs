//! Weighted majority-vote late fusion over pre-computed classifier scores.
//!
//! The crate learns a vote `H(x) = sum_i q_i h_i(x)` over real-valued voters
//! (one score column per modality, or one RBF kernel voter per training
//! anchor) by solving the MinCq quadratic program, plus two ranking
//! extensions that add order-preserving pairwise constraints. Around the
//! learners sit the evaluation metrics (risk, margin moments, C-bound,
//! diversity, Prec@j, MAP, paired t-test), four fixed fusion baselines, a
//! stratified model-selection protocol, a synthetic score generator and CSV
//! / model-file I/O.
//!
//! All numeric code is generic over the scalar type through [`num::Real`];
//! the aliases below pin the common `f64` instantiations.

pub mod baselines;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod mincq;
pub mod model_selection;
pub mod num;
pub mod qp;
pub mod rank;
pub mod synth;
pub mod types;

pub use error::{FusionError, Result, SolveStatus};
pub use num::Real;

/// `f64` score table, the CLI's working type.
pub type ScoreMatrix64 = types::ScoreMatrix<f64>;
/// `f32` score table for memory-bound callers.
pub type ScoreMatrix32 = types::ScoreMatrix<f32>;
/// `f64` trained vote.
pub type FusionModel64 = types::FusionModel<f64>;
/// `f64` vote weights.
pub type VoterWeights64 = types::VoterWeights<f64>;
/// `f64` QP in standard form.
pub type QpProblem64 = types::QpProblem<f64>;
/// `f64` QP solution.
pub type QpSolution64 = types::QpSolution<f64>;
/// `f64` evaluation report.
pub type EvalReport64 = types::EvalReport<f64>;
/// `f64` RBF stacking layer.
pub type KernelLayer64 = kernel::KernelLayer<f64>;
