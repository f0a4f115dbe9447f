//! `fusionq`: train, apply and evaluate weighted majority-vote fusion models
//! over pre-computed classifier scores.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible or
//! degenerate model. Every run logs its fully resolved configuration to
//! stderr so a result is reproducible from the log alone.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fusionq::error::FusionError;
use fusionq::kernel::default_gamma_grid;
use fusionq::metrics::{evaluate, paired_t_test};
use fusionq::mincq::{predict, DEFAULT_MU_GRID};
use fusionq::model_selection::{train_with_cv, CvConfig, CvOutcome, ParamGrid};
use fusionq::qp::SolverConfig;
use fusionq::rank::DEFAULT_BETA_GRID;
use fusionq::synth::SynthSpec;
use fusionq::types::Algorithm;
use fusionq::{io, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_MODEL: u8 = 3;

#[derive(Parser)]
#[command(name = "fusionq", version, about = "Late fusion of classifier scores by weighted majority votes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fusion model with cross-validated hyperparameters.
    Train(TrainArgs),
    /// Score a data file with a trained model.
    Predict(PredictArgs),
    /// Evaluate a trained model on a labeled data file.
    Eval(EvalArgs),
    /// Paired t-test between two per-concept metric files.
    Compare(CompareArgs),
    /// Generate a synthetic score file from a generator spec.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training scores CSV (id,label,<voters...>).
    #[arg(long)]
    data: PathBuf,
    /// mincq | mincq-pw | mincq-pwav | sum | map-weighted | best-confidence | h-best
    #[arg(long)]
    algorithm: String,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Fixed margin parameter (overrides --grid-mu).
    #[arg(long)]
    mu: Option<f64>,
    /// Margin parameter grid, comma-separated.
    #[arg(long, value_name = "LIST")]
    grid_mu: Option<String>,
    /// Fixed slack penalty (overrides --grid-beta).
    #[arg(long)]
    beta: Option<f64>,
    /// Slack penalty grid, comma-separated.
    #[arg(long, value_name = "LIST")]
    grid_beta: Option<String>,
    /// Stacking layer over score vectors; only "rbf" is available.
    #[arg(long)]
    kernel: Option<String>,
    /// Fixed RBF width (overrides --grid-gamma).
    #[arg(long)]
    gamma: Option<f64>,
    /// RBF width grid, comma-separated.
    #[arg(long, value_name = "LIST")]
    grid_gamma: Option<String>,
    /// Cap on kernel anchors (deterministic subsample by --seed).
    #[arg(long)]
    max_anchors: Option<usize>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed for splits, folds and anchor subsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the cross-validation table.
    #[arg(long)]
    cv_report: Option<PathBuf>,
    /// QP solver absolute/relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    qp_eps: f64,
    /// QP solver iteration budget.
    #[arg(long, default_value_t = 20_000)]
    qp_max_iter: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Scores CSV; the label column is required by the format but unused.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (id,score,label).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled scores CSV.
    #[arg(long)]
    data: PathBuf,
    /// Optional file for the report (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// First per-concept metric file (concept,value).
    #[arg(long)]
    a: PathBuf,
    /// Second per-concept metric file (concept,value).
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec (key=value lines).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output scores CSV.
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &FusionError) -> u8 {
    match e {
        FusionError::InvalidHyperparameter { .. } => EXIT_USAGE,
        FusionError::InfeasibleMargin { .. }
        | FusionError::NoFeasibleModel
        | FusionError::MissingClass { .. }
        | FusionError::ProblemTooLarge { .. }
        | FusionError::SolverFailure { .. }
        | FusionError::UndefinedBound { .. }
        | FusionError::DegenerateMoments
        | FusionError::DegenerateTest
        | FusionError::UndefinedMap
        | FusionError::DegenerateWeights
        | FusionError::DegenerateStandardization { .. }
        | FusionError::StratificationFailure(_) => EXIT_MODEL,
        _ => EXIT_DATA,
    }
}

fn parse_grid(name: &'static str, text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let v: f64 = part.trim().parse().map_err(|_| FusionError::InvalidHyperparameter {
            name,
            value: f64::NAN,
            reason: "grid entries must be decimal reals",
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(FusionError::InvalidHyperparameter {
            name,
            value: f64::NAN,
            reason: "grid must not be empty",
        });
    }
    Ok(out)
}

fn threads_from_env() -> usize {
    std::env::var("FUSIONQ_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

fn fmt_grid(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_params(params: &BTreeMap<String, f64>) -> String {
    if params.is_empty() {
        return "-".to_string();
    }
    params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cv_report_text(outcome: &CvOutcome) -> String {
    let mut out = String::new();
    for row in &outcome.rows {
        out.push_str("grid_point ");
        out.push_str(&fmt_params(&row.params));
        match (&row.fold_map, &row.skipped) {
            (Some(folds), _) => {
                out.push_str(&format!(
                    " mean_map={} fold_map={}",
                    row.mean_map.unwrap(),
                    fmt_grid(folds)
                ));
            }
            (None, Some(reason)) => out.push_str(&format!(" skipped={reason:?}")),
            _ => {}
        }
        out.push('\n');
    }
    out.push_str(&format!("best {}\n", fmt_params(&outcome.best_params)));
    out
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let algorithm: Algorithm =
        args.algorithm
            .parse()
            .map_err(|_| FusionError::InvalidHyperparameter {
                name: "algorithm",
                value: f64::NAN,
                reason: "expected one of mincq, mincq-pw, mincq-pwav, sum, map-weighted, best-confidence, h-best",
            })?;
    if let Some(kernel) = &args.kernel {
        if kernel != "rbf" {
            return Err(FusionError::InvalidHyperparameter {
                name: "kernel",
                value: f64::NAN,
                reason: "only the rbf kernel layer is available",
            });
        }
    }
    let s: fusionq::ScoreMatrix64 = io::read_scores(&args.data)?;

    let mut grid = ParamGrid::new();
    if algorithm.is_mincq() {
        let mus = match (args.mu, &args.grid_mu) {
            (Some(mu), _) => vec![mu],
            (None, Some(text)) => parse_grid("mu", text)?,
            (None, None) => DEFAULT_MU_GRID.to_vec(),
        };
        grid.insert("mu".into(), mus);
    }
    if algorithm.is_ranking() {
        let betas = match (args.beta, &args.grid_beta) {
            (Some(beta), _) => vec![beta],
            (None, Some(text)) => parse_grid("beta", text)?,
            (None, None) => DEFAULT_BETA_GRID.to_vec(),
        };
        grid.insert("beta".into(), betas);
    }
    if args.kernel.is_some() {
        let gammas = match (args.gamma, &args.grid_gamma) {
            (Some(gamma), _) => vec![gamma],
            (None, Some(text)) => parse_grid("gamma", text)?,
            (None, None) => default_gamma_grid(s.voters()),
        };
        grid.insert("gamma".into(), gammas);
    }

    let threads = threads_from_env();
    let cfg = CvConfig {
        folds: args.folds,
        seed: args.seed,
        threads,
        solver: SolverConfig {
            eps_abs: args.qp_eps,
            eps_rel: args.qp_eps,
            max_iter: args.qp_max_iter,
            ..SolverConfig::default()
        },
        max_anchors: args.max_anchors,
    };
    eprintln!(
        "config subcommand=train data={} out={} algorithm={} kernel={} folds={} seed={} threads={} qp-eps={} qp-max-iter={} max-anchors={} grid-mu={} grid-beta={} grid-gamma={}",
        args.data.display(),
        args.out.display(),
        algorithm,
        args.kernel.as_deref().unwrap_or("none"),
        cfg.folds,
        cfg.seed,
        threads,
        cfg.solver.eps_abs,
        cfg.solver.max_iter,
        args.max_anchors.map_or("-".to_string(), |v| v.to_string()),
        grid.get("mu").map_or("-".to_string(), |v| fmt_grid(v)),
        grid.get("beta").map_or("-".to_string(), |v| fmt_grid(v)),
        grid.get("gamma").map_or("-".to_string(), |v| fmt_grid(v)),
    );

    let (model, outcome) = train_with_cv(&s, algorithm, &grid, &cfg)?;
    io::write_model(&model, &args.out)?;
    if let Some(path) = &args.cv_report {
        io::atomic_write(path, cv_report_text(&outcome).as_bytes())?;
    }
    println!(
        "trained algorithm={} voters={} best={} model={}",
        model.algorithm,
        model.voter_count(),
        fmt_params(&outcome.best_params),
        args.out.display()
    );
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    eprintln!(
        "config subcommand=predict model={} data={} out={}",
        args.model.display(),
        args.data.display(),
        args.out.display()
    );
    let model: fusionq::FusionModel64 = io::read_model(&args.model)?;
    let s: fusionq::ScoreMatrix64 = io::read_scores(&args.data)?;
    let predictions = predict(&model, &s)?;
    io::write_predictions(s.example_ids(), &predictions, &args.out)?;
    println!("predicted examples={} out={}", s.examples(), args.out.display());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    eprintln!(
        "config subcommand=eval model={} data={} out={}",
        args.model.display(),
        args.data.display(),
        args.out.as_ref().map_or("-".to_string(), |p| p.display().to_string())
    );
    let model: fusionq::FusionModel64 = io::read_model(&args.model)?;
    let s: fusionq::ScoreMatrix64 = io::read_scores(&args.data)?;
    let report = evaluate(&model, &s)?;
    let text = io::format_eval_report(&model, s.examples(), &report);
    print!("{text}");
    if let Some(path) = &args.out {
        io::atomic_write(path, text.as_bytes())?;
    }
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    eprintln!(
        "config subcommand=compare a={} b={}",
        args.a.display(),
        args.b.display()
    );
    let a = io::read_metric_file(&args.a)?;
    let b = io::read_metric_file(&args.b)?;
    let index: BTreeMap<&str, f64> = b.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    if a.len() != b.len() {
        return Err(FusionError::DataFormat {
            line: 0,
            message: format!("concept counts differ: {} vs {}", a.len(), b.len()),
        });
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (concept, value) in &a {
        let other = index.get(concept.as_str()).ok_or_else(|| FusionError::DataFormat {
            line: 0,
            message: format!("concept {concept:?} missing from {}", args.b.display()),
        })?;
        xs.push(*value);
        ys.push(*other);
    }
    let test = paired_t_test(&xs, &ys)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("n={}", xs.len());
    println!("mean_a={}", mean(&xs));
    println!("mean_b={}", mean(&ys));
    println!("t_stat={}", test.t_stat);
    println!("p_value={}", test.p_value);
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    eprintln!(
        "config subcommand=synth spec={} seed={} out={}",
        args.spec.display(),
        args.seed,
        args.out.display()
    );
    let text = std::fs::read_to_string(&args.spec)?;
    let spec = SynthSpec::parse(&text)?;
    let s: fusionq::ScoreMatrix64 = fusionq::synth::generate(&spec, args.seed)?;
    io::write_scores(&s, &args.out)?;
    println!(
        "generated examples={} voters={} out={}",
        s.examples(),
        s.voters(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Eval(args) => run_eval(args),
        Command::Compare(args) => run_compare(args),
        Command::Synth(args) => run_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
