//! Command-line front end.
//!
//! Five subcommands: `aggregate` answers queries, `analyze` prices a run,
//! `smooth-sens` inspects the sensitivity of that price, `sanitize` releases
//! the price privately, and `simulate` sweeps synthetic ensembles. Reports
//! are JSON with fixed key order and 17-significant-digit floats, so a rerun
//! with the same inputs and seed reproduces output byte for byte.
//!
//! Exit codes: 0 success, 2 invalid input, 3 refused release.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::accountant::{analyze_run, AnalysisMechanism, AnalysisReport};
use crate::error::{PateError, Result};
use crate::histogram::{read_probs_csv, read_votes_csv, VoteRecord};
use crate::mechanisms::{
    confident_gnmax, gnmax, interactive_gnmax, lnmax, AggregationOutcome, ConfidentConfig,
    InteractiveConfig,
};
use crate::rng::RandomSource;
use crate::simulation::{sweep, write_sweep_csv, EnsembleModel, SweepMechanism};
use crate::smooth_sensitivity::{
    default_beta, default_sigma_ss, distance_series, ensure_releasable, gnss_release,
    smooth_sensitivity, sum_smooth_sensitivity, SsParams,
};

pub const REPORT_SCHEMA_VERSION: u64 = 1;

#[derive(Parser)]
#[command(
    name = "pate",
    version,
    about = "Noisy-argmax vote aggregation with a Renyi-DP accountant and private release of the privacy cost"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer queries by noisy aggregation of teacher votes.
    Aggregate(AggregateArgs),
    /// Compute the RDP ledger and (epsilon, delta) guarantee of a run.
    Analyze(AnalyzeArgs),
    /// Inspect the beta-smooth sensitivity of the run's privacy cost.
    #[command(name = "smooth-sens")]
    SmoothSens(SmoothSensArgs),
    /// Release an analyzed privacy cost with sensitivity-scaled noise.
    Sanitize(SanitizeArgs),
    /// Sweep synthetic ensembles over mechanism grids.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismKind {
    Gnmax,
    Lnmax,
    Confident,
    Interactive,
}

impl MechanismKind {
    fn name(self) -> &'static str {
        match self {
            MechanismKind::Gnmax => "gnmax",
            MechanismKind::Lnmax => "lnmax",
            MechanismKind::Confident => "confident",
            MechanismKind::Interactive => "interactive",
        }
    }
}

#[derive(Args)]
struct MechanismArgs {
    /// Aggregation mechanism.
    #[arg(long, value_enum)]
    mechanism: MechanismKind,
    /// Gaussian noise scale (gnmax answer noise).
    #[arg(long)]
    sigma: Option<f64>,
    /// Laplace inverse scale (lnmax noise is Lap(1/gamma); interactive
    /// student-confidence threshold).
    #[arg(long)]
    gamma: Option<f64>,
    /// Noisy check threshold (confident/interactive); defaults to 0.7x the
    /// teacher count.
    #[arg(long)]
    threshold: Option<f64>,
    /// Check noise scale (confident/interactive); defaults to 3x sigma2.
    #[arg(long)]
    sigma1: Option<f64>,
    /// Answer noise scale (confident/interactive).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Student prediction scores CSV (interactive only).
    #[arg(long)]
    student_probs: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    mechanism: MechanismArgs,
    /// Teacher votes CSV (query_id, c_0, ..., c_{m-1}).
    #[arg(long)]
    votes: PathBuf,
    /// Root seed; every query derives an independent stream from it.
    #[arg(long, env = "PATE_SEED", default_value_t = 0)]
    seed: u64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    mechanism: MechanismArgs,
    #[arg(long)]
    votes: PathBuf,
    /// Failure probability of the final (epsilon, delta) guarantee.
    #[arg(long)]
    delta: f64,
    /// Largest integer RDP order tracked (grid is {1.5, 1.75, 2..=N}).
    #[arg(long, default_value_t = 256)]
    max_order: u32,
    #[arg(long, env = "PATE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SmoothSensArgs {
    #[arg(long)]
    votes: PathBuf,
    /// Answer noise scale the costs were computed at.
    #[arg(long)]
    sigma: f64,
    /// RDP order of the cost function.
    #[arg(long)]
    order: f64,
    /// Smoothing parameter; defaults to 0.4 / order.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SanitizeArgs {
    /// JSON report produced by `analyze`.
    #[arg(long)]
    report: PathBuf,
    /// Smoothing parameter; defaults to 0.4 / order from the report.
    #[arg(long)]
    beta: Option<f64>,
    /// Release noise scale; defaults to 3 sqrt((order + 1) / epsilon).
    #[arg(long)]
    sigma_ss: Option<f64>,
    #[arg(long, env = "PATE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    GlyphLike,
    MnistLike,
    Custom,
}

#[derive(Args)]
struct SimulateArgs {
    /// Ensemble preset; `custom` reads --teachers/--classes/--accuracy/--mislabel-rate.
    #[arg(long, value_enum)]
    preset: Preset,
    /// Queries per sweep cell.
    #[arg(long, default_value_t = 300)]
    queries: usize,
    /// Mechanism grid JSON: {"teacher_counts": [...], "delta": ...,
    /// "cells": [{"mechanism": "gnmax", "sigma": ...}, ...]}.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, env = "PATE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Teacher count (custom preset).
    #[arg(long)]
    teachers: Option<u64>,
    /// Class count (custom preset).
    #[arg(long)]
    classes: Option<usize>,
    /// Per-teacher accuracy (custom preset).
    #[arg(long)]
    accuracy: Option<f64>,
    /// Fraction of mislabeled queries (custom preset).
    #[arg(long)]
    mislabel_rate: Option<f64>,
}

/// Parses and executes `argv`, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PateError::ReleaseRefused(_) => 3,
                _ => 2,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::SmoothSens(args) => cmd_smooth_sens(args),
        Command::Sanitize(args) => cmd_sanitize(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn write_output(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(PateError::Io),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(PateError::Io)
        }
    }
}

fn require(opt: Option<f64>, flag: &str, mechanism: &str) -> Result<f64> {
    opt.ok_or_else(|| PateError::InvalidParameter(format!("--{flag} is required for {mechanism}")))
}

/// Resolved per-mechanism parameters shared by aggregate and analyze.
enum ResolvedMechanism {
    GnMax {
        sigma: f64,
    },
    LnMax {
        gamma: f64,
    },
    Confident(ConfidentConfig),
    Interactive {
        cfg_threshold: f64,
        gamma: f64,
        sigma1: f64,
        sigma2: f64,
        probs: Vec<Vec<f64>>,
    },
}

fn resolve_mechanism(args: &MechanismArgs, votes: &[VoteRecord]) -> Result<ResolvedMechanism> {
    let default_threshold = || 0.7 * votes.first().map_or(0, |r| r.histogram.total()) as f64;
    match args.mechanism {
        MechanismKind::Gnmax => Ok(ResolvedMechanism::GnMax {
            sigma: require(args.sigma, "sigma", "gnmax")?,
        }),
        MechanismKind::Lnmax => Ok(ResolvedMechanism::LnMax {
            gamma: require(args.gamma, "gamma", "lnmax")?,
        }),
        MechanismKind::Confident => {
            let sigma2 = require(args.sigma2, "sigma2", "confident")?;
            Ok(ResolvedMechanism::Confident(ConfidentConfig {
                threshold: args.threshold.unwrap_or_else(default_threshold),
                sigma1: args.sigma1.unwrap_or(3.0 * sigma2),
                sigma2,
            }))
        }
        MechanismKind::Interactive => {
            let sigma2 = require(args.sigma2, "sigma2", "interactive")?;
            let gamma = require(args.gamma, "gamma", "interactive")?;
            let path = args.student_probs.as_ref().ok_or_else(|| {
                PateError::InvalidParameter(
                    "--student-probs is required for interactive".to_string(),
                )
            })?;
            let probs = read_probs_csv(path)?;
            if probs.len() != votes.len() {
                return Err(PateError::DimensionMismatch {
                    expected: votes.len(),
                    got: probs.len(),
                });
            }
            Ok(ResolvedMechanism::Interactive {
                cfg_threshold: args.threshold.unwrap_or_else(default_threshold),
                gamma,
                sigma1: args.sigma1.unwrap_or(3.0 * sigma2),
                sigma2,
                probs: probs.into_iter().map(|(_, values)| values).collect(),
            })
        }
    }
}

fn cmd_aggregate(args: AggregateArgs) -> Result<()> {
    let votes = read_votes_csv(&args.votes)?;
    let mech = resolve_mechanism(&args.mechanism, &votes)?;
    let mut out = String::from("query_id,outcome,label\n");
    for (idx, rec) in votes.iter().enumerate() {
        let mut rng = RandomSource::for_query(args.seed, idx as u64);
        let outcome = match &mech {
            ResolvedMechanism::GnMax { sigma } => {
                AggregationOutcome::TeacherLabel(gnmax(&rec.histogram, *sigma, &mut rng)?)
            }
            ResolvedMechanism::LnMax { gamma } => {
                AggregationOutcome::TeacherLabel(lnmax(&rec.histogram, *gamma, &mut rng)?)
            }
            ResolvedMechanism::Confident(cfg) => confident_gnmax(&rec.histogram, cfg, &mut rng)?,
            ResolvedMechanism::Interactive {
                cfg_threshold,
                gamma,
                sigma1,
                sigma2,
                probs,
            } => {
                let cfg = InteractiveConfig {
                    threshold: *cfg_threshold,
                    gamma: *gamma,
                    sigma1: *sigma1,
                    sigma2: *sigma2,
                    teachers: rec.histogram.total(),
                };
                interactive_gnmax(&rec.histogram, &probs[idx], &cfg, &mut rng)?
            }
        };
        let label = outcome.label().map(|l| l.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", rec.id, outcome.name(), label)
            .expect("string write is infallible");
    }
    write_output(&args.out, out.as_bytes())
}

fn order_grid(max_order: u32) -> Result<Vec<f64>> {
    if max_order < 2 {
        return Err(PateError::InvalidParameter(format!(
            "--max-order must be at least 2, got {max_order}"
        )));
    }
    let mut grid = vec![1.5, 1.75];
    grid.extend((2..=max_order).map(f64::from));
    Ok(grid)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let votes = read_votes_csv(&args.votes)?;
    let mech = resolve_mechanism(&args.mechanism, &votes)?;
    let orders = order_grid(args.max_order)?;
    let (analysis_mech, probs) = match &mech {
        ResolvedMechanism::GnMax { sigma } => (AnalysisMechanism::GnMax { sigma: *sigma }, None),
        ResolvedMechanism::LnMax { gamma } => (AnalysisMechanism::LnMax { gamma: *gamma }, None),
        ResolvedMechanism::Confident(cfg) => (
            AnalysisMechanism::Confident {
                threshold: cfg.threshold,
                sigma1: cfg.sigma1,
                sigma2: cfg.sigma2,
            },
            None,
        ),
        ResolvedMechanism::Interactive {
            cfg_threshold,
            sigma1,
            sigma2,
            probs,
            ..
        } => (
            AnalysisMechanism::Interactive {
                threshold: *cfg_threshold,
                sigma1: *sigma1,
                sigma2: *sigma2,
            },
            Some(probs.clone()),
        ),
    };
    let report = analyze_run(
        &votes,
        &analysis_mech,
        &orders,
        args.delta,
        args.seed,
        probs.as_deref(),
    )?;
    let json = render_analysis_report(&args, &mech, &report)?;
    write_output(&args.out, json.as_bytes())
}

fn render_analysis_report(
    args: &AnalyzeArgs,
    mech: &ResolvedMechanism,
    report: &AnalysisReport,
) -> Result<String> {
    let mut w = CanonicalJson::new();
    w.begin_object();
    w.key("schema_version");
    w.uint(REPORT_SCHEMA_VERSION);
    w.key("config");
    w.begin_object();
    w.key("subcommand");
    w.string("analyze");
    w.key("mechanism");
    w.string(args.mechanism.mechanism.name());
    match mech {
        ResolvedMechanism::GnMax { sigma } => {
            w.key("sigma");
            w.float(*sigma)?;
        }
        ResolvedMechanism::LnMax { gamma } => {
            w.key("gamma");
            w.float(*gamma)?;
        }
        ResolvedMechanism::Confident(cfg) => {
            w.key("threshold");
            w.float(cfg.threshold)?;
            w.key("sigma1");
            w.float(cfg.sigma1)?;
            w.key("sigma2");
            w.float(cfg.sigma2)?;
        }
        ResolvedMechanism::Interactive {
            cfg_threshold,
            gamma,
            sigma1,
            sigma2,
            ..
        } => {
            w.key("threshold");
            w.float(*cfg_threshold)?;
            w.key("gamma");
            w.float(*gamma)?;
            w.key("sigma1");
            w.float(*sigma1)?;
            w.key("sigma2");
            w.float(*sigma2)?;
        }
    }
    w.key("votes");
    w.string(&args.votes.to_string_lossy());
    if let Some(p) = &args.mechanism.student_probs {
        w.key("student_probs");
        w.string(&p.to_string_lossy());
    }
    w.key("delta");
    w.float(args.delta)?;
    w.key("seed");
    w.uint(args.seed);
    w.key("max_order");
    w.uint(args.max_order as u64);
    w.end_object();
    w.key("queries");
    w.uint(report.per_query.len() as u64);
    w.key("answered");
    w.uint(report.per_query.iter().filter(|c| c.answered).count() as u64);
    w.key("per_query");
    w.begin_array();
    for cost in &report.per_query {
        w.begin_object();
        w.key("id");
        w.string(&cost.id);
        w.key("q");
        w.float(cost.q)?;
        w.key("answered");
        w.boolean(cost.answered);
        w.end_object();
    }
    w.end_array();
    w.key("curve");
    w.begin_object();
    w.key("orders");
    w.begin_array();
    for &o in &report.curve.orders {
        w.float(o)?;
    }
    w.end_array();
    w.key("eps");
    w.begin_array();
    for &e in &report.curve.eps {
        w.float(e)?;
    }
    w.end_array();
    w.end_object();
    w.key("dp");
    w.begin_object();
    w.key("epsilon");
    w.float(report.dp.epsilon)?;
    w.key("delta");
    w.float(report.dp.delta)?;
    w.key("order");
    w.float(report.dp.order)?;
    w.end_object();
    w.end_object();
    Ok(w.finish())
}

fn cmd_smooth_sens(args: SmoothSensArgs) -> Result<()> {
    let votes = read_votes_csv(&args.votes)?;
    if votes.is_empty() {
        return Err(PateError::InvalidParameter(
            "votes file has no data rows".to_string(),
        ));
    }
    let beta = args.beta.unwrap_or_else(|| default_beta(args.order));
    let m = votes[0].histogram.num_classes();
    let params = SsParams::new(args.sigma, args.order, m)?;
    let totals: Vec<u64> = votes.iter().map(|r| r.histogram.total()).collect();
    ensure_releasable(&params, &totals)?;
    let mut per_query = Vec::with_capacity(votes.len());
    let mut series = Vec::with_capacity(votes.len());
    for rec in &votes {
        per_query.push((
            rec.id.clone(),
            smooth_sensitivity(&params, &rec.histogram, beta)?,
        ));
        series.push(distance_series(&params, &rec.histogram)?);
    }
    let total = sum_smooth_sensitivity(&series, beta)?;

    let mut w = CanonicalJson::new();
    w.begin_object();
    w.key("schema_version");
    w.uint(REPORT_SCHEMA_VERSION);
    w.key("config");
    w.begin_object();
    w.key("subcommand");
    w.string("smooth-sens");
    w.key("votes");
    w.string(&args.votes.to_string_lossy());
    w.key("sigma");
    w.float(args.sigma)?;
    w.key("order");
    w.float(args.order)?;
    w.key("beta");
    w.float(beta)?;
    w.end_object();
    w.key("num_classes");
    w.uint(m as u64);
    w.key("q0");
    w.float(params.q0)?;
    w.key("q1");
    w.float(params.q1)?;
    w.key("per_query");
    w.begin_array();
    for (id, ss) in &per_query {
        w.begin_object();
        w.key("id");
        w.string(id);
        w.key("smooth_sensitivity");
        w.float(*ss)?;
        w.end_object();
    }
    w.end_array();
    w.key("sum_smooth_sensitivity");
    w.float(total)?;
    w.end_object();
    write_output(&args.out, w.finish().as_bytes())
}

// ---- analyze-report parsing (sanitize input) ----

#[derive(Deserialize)]
struct ReportFile {
    schema_version: u64,
    config: ReportConfig,
    per_query: Vec<ReportQuery>,
    curve: ReportCurve,
    dp: ReportDp,
}

#[derive(Deserialize)]
struct ReportConfig {
    mechanism: String,
    sigma: Option<f64>,
    sigma2: Option<f64>,
    votes: String,
}

#[derive(Deserialize)]
struct ReportQuery {
    id: String,
    q: f64,
    answered: bool,
}

#[derive(Deserialize)]
struct ReportCurve {
    orders: Vec<f64>,
    eps: Vec<f64>,
}

#[derive(Deserialize)]
struct ReportDp {
    delta: f64,
    order: f64,
}

fn cmd_sanitize(args: SanitizeArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report)?;
    let report: ReportFile = serde_json::from_str(&text)
        .map_err(|e| PateError::ReportSchema(format!("cannot parse analyze report: {e}")))?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(PateError::ReportSchema(format!(
            "unsupported schema_version {}",
            report.schema_version
        )));
    }
    let sigma = match report.config.mechanism.as_str() {
        "gnmax" => report.config.sigma.ok_or_else(|| {
            PateError::ReportSchema("gnmax report is missing config.sigma".to_string())
        })?,
        "confident" => report.config.sigma2.ok_or_else(|| {
            PateError::ReportSchema("confident report is missing config.sigma2".to_string())
        })?,
        "lnmax" => {
            return Err(PateError::ReleaseRefused(
                "smooth-sensitivity release covers Gaussian-cost runs only; \
                 the Laplace mechanism's cost has no such analysis here"
                    .to_string(),
            ));
        }
        "interactive" => {
            return Err(PateError::ReleaseRefused(
                "interactive runs price queries on the real-valued teacher-student \
                 difference, outside the integer-histogram sensitivity walk"
                    .to_string(),
            ));
        }
        other => {
            return Err(PateError::ReportSchema(format!(
                "unknown mechanism {other:?} in report"
            )));
        }
    };
    if report.curve.orders.len() != report.curve.eps.len() {
        return Err(PateError::ReportSchema(
            "curve orders and eps have different lengths".to_string(),
        ));
    }
    let lambda = report.dp.order;
    let eps_hat = report
        .curve
        .orders
        .iter()
        .position(|&o| o == lambda)
        .map(|i| report.curve.eps[i])
        .ok_or_else(|| {
            PateError::ReportSchema(format!(
                "dp.order {lambda} not present in the report's order grid"
            ))
        })?;

    let votes = read_votes_csv(Path::new(&report.config.votes))?;
    if votes.len() != report.per_query.len() {
        return Err(PateError::ReportSchema(format!(
            "votes file has {} rows but the report prices {} queries",
            votes.len(),
            report.per_query.len()
        )));
    }
    let m = votes[0].histogram.num_classes();
    let params = SsParams::new(sigma, lambda, m)?;
    // re-derive q for each answered query: a stale or edited votes file must
    // not silently sanitize a different run
    let mut answered_series = Vec::new();
    let mut answered_totals = Vec::new();
    for (rec, pq) in votes.iter().zip(&report.per_query) {
        if rec.id != pq.id {
            return Err(PateError::ReportSchema(format!(
                "query id mismatch: votes row {:?} vs report {:?}",
                rec.id, pq.id
            )));
        }
        if !pq.answered {
            continue;
        }
        let q = crate::accountant::compute_q(&rec.histogram, sigma).q;
        let tol = 1e-9 * pq.q.abs().max(1e-300);
        if (q - pq.q).abs() > tol {
            return Err(PateError::ReportSchema(format!(
                "query {:?}: recomputed q {q:e} does not match report q {:e}; \
                 votes file and report disagree",
                rec.id, pq.q
            )));
        }
        answered_totals.push(rec.histogram.total());
        answered_series.push((rec, ()));
    }
    ensure_releasable(&params, &answered_totals)?;
    let beta = args.beta.unwrap_or_else(|| default_beta(lambda));
    let sigma_ss = args
        .sigma_ss
        .unwrap_or_else(|| default_sigma_ss(lambda, eps_hat.max(1e-12)));
    let mut series = Vec::with_capacity(answered_series.len());
    for (rec, ()) in &answered_series {
        series.push(distance_series(&params, &rec.histogram)?);
    }
    let ss = sum_smooth_sensitivity(&series, beta)?;
    let mut rng = RandomSource::from_seed(args.seed);
    let released = gnss_release(
        eps_hat,
        ss,
        lambda,
        beta,
        sigma_ss,
        report.dp.delta,
        &mut rng,
    )?;
    let sanitized_epsilon = released.noised_value + released.fixed_surcharge;

    let mut w = CanonicalJson::new();
    w.begin_object();
    w.key("schema_version");
    w.uint(REPORT_SCHEMA_VERSION);
    w.key("config");
    w.begin_object();
    w.key("subcommand");
    w.string("sanitize");
    w.key("report");
    w.string(&args.report.to_string_lossy());
    w.key("delta");
    w.float(report.dp.delta)?;
    w.key("seed");
    w.uint(args.seed);
    w.end_object();
    w.key("order");
    w.float(lambda)?;
    w.key("sanitized_epsilon");
    w.float(sanitized_epsilon)?;
    w.key("surcharge");
    w.float(released.fixed_surcharge)?;
    w.key("beta");
    w.float(released.beta)?;
    w.key("sigma_ss");
    w.float(released.sigma_ss)?;
    w.end_object();
    write_output(&args.out, w.finish().as_bytes())
}

// ---- simulate ----

#[derive(Deserialize)]
struct GridFile {
    teacher_counts: Vec<u64>,
    delta: f64,
    cells: Vec<GridCell>,
}

#[derive(Deserialize)]
#[serde(tag = "mechanism", rename_all = "lowercase")]
enum GridCell {
    Gnmax {
        sigma: f64,
    },
    Lnmax {
        scale: f64,
    },
    Confident {
        threshold: f64,
        sigma1: f64,
        sigma2: f64,
    },
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let model = match args.preset {
        Preset::GlyphLike => EnsembleModel::glyph_like(),
        Preset::MnistLike => EnsembleModel::mnist_like(),
        Preset::Custom => {
            let teachers = args.teachers.ok_or_else(|| {
                PateError::InvalidParameter("--teachers is required for custom".to_string())
            })?;
            let classes = args.classes.ok_or_else(|| {
                PateError::InvalidParameter("--classes is required for custom".to_string())
            })?;
            let accuracy = require(args.accuracy, "accuracy", "custom")?;
            EnsembleModel {
                n_teachers: teachers,
                num_classes: classes,
                teacher_accuracy: accuracy,
                class_weights: vec![1.0; classes],
                mislabel_rate: args.mislabel_rate.unwrap_or(0.0),
            }
        }
    };
    let grid_text = fs::read_to_string(&args.grid)?;
    let grid: GridFile = serde_json::from_str(&grid_text)
        .map_err(|e| PateError::ReportSchema(format!("cannot parse grid file: {e}")))?;
    let cells: Vec<SweepMechanism> = grid
        .cells
        .iter()
        .map(|c| match c {
            GridCell::Gnmax { sigma } => SweepMechanism::GnMax { sigma: *sigma },
            GridCell::Lnmax { scale } => SweepMechanism::LnMax { scale: *scale },
            GridCell::Confident {
                threshold,
                sigma1,
                sigma2,
            } => SweepMechanism::Confident {
                threshold: *threshold,
                sigma1: *sigma1,
                sigma2: *sigma2,
            },
        })
        .collect();
    let rows = sweep(
        &model,
        &grid.teacher_counts,
        &cells,
        args.queries,
        grid.delta,
        args.seed,
    )?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    write_output(&args.out, &buf)
}

// ---- canonical JSON writer ----

/// JSON writer with deterministic output: keys in call order, floats always
/// rendered as 17-significant-digit scientific notation.
struct CanonicalJson {
    buf: String,
    needs_comma: Vec<bool>,
    pending_key: bool,
}

impl CanonicalJson {
    fn new() -> Self {
        CanonicalJson {
            buf: String::new(),
            needs_comma: vec![false],
            pending_key: false,
        }
    }

    fn separate(&mut self) {
        if self.pending_key {
            self.pending_key = false;
            return;
        }
        if let Some(top) = self.needs_comma.last_mut() {
            if *top {
                self.buf.push(',');
            }
            *top = true;
        }
    }

    fn begin_object(&mut self) {
        self.separate();
        self.buf.push('{');
        self.needs_comma.push(false);
    }

    fn end_object(&mut self) {
        self.needs_comma.pop();
        self.buf.push('}');
    }

    fn begin_array(&mut self) {
        self.separate();
        self.buf.push('[');
        self.needs_comma.push(false);
    }

    fn end_array(&mut self) {
        self.needs_comma.pop();
        self.buf.push(']');
    }

    fn key(&mut self, name: &str) {
        if let Some(top) = self.needs_comma.last_mut() {
            if *top {
                self.buf.push(',');
            }
            *top = true;
        }
        self.push_escaped(name);
        self.buf.push(':');
        self.pending_key = true;
    }

    fn string(&mut self, value: &str) {
        self.separate();
        self.push_escaped(value);
    }

    fn float(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(PateError::InvalidParameter(format!(
                "refusing to serialize non-finite value {value}"
            )));
        }
        self.separate();
        write!(self.buf, "{value:.16e}").expect("string write is infallible");
        Ok(())
    }

    fn uint(&mut self, value: u64) {
        self.separate();
        write!(self.buf, "{value}").expect("string write is infallible");
    }

    fn boolean(&mut self, value: bool) {
        self.separate();
        self.buf.push_str(if value { "true" } else { "false" });
    }

    fn push_escaped(&mut self, s: &str) {
        self.buf.push('"');
        for c in s.chars() {
            match c {
                '"' => self.buf.push_str("\\\""),
                '\\' => self.buf.push_str("\\\\"),
                '\n' => self.buf.push_str("\\n"),
                '\r' => self.buf.push_str("\\r"),
                '\t' => self.buf.push_str("\\t"),
                c if (c as u32) < 0x20 => {
                    write!(self.buf, "\\u{:04x}", c as u32).expect("string write is infallible");
                }
                c => self.buf.push(c),
            }
        }
        self.buf.push('"');
    }

    fn finish(mut self) -> String {
        self.buf.push('\n');
        self.buf
    }
}
