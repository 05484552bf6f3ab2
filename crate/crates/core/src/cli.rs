//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    export_report, parse_arrivals, parse_labels, round_sig, write_rows, Format, Summary,
};
use crate::error::{Error, Result};
use crate::inference::EstimatorConfig;
use crate::simulator::{
    consumed_majority_accuracy, label_majority_accuracy, run_replay, run_simulation,
    AggregateReport, SimConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "batchcrowd", version, about = "Batch crowdsourcing assignment experiments")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic runs averaged over seeds.
    Run(RunArgs),
    /// Synthetic runs over a grid of one parameter.
    Sweep(SweepArgs),
    /// Replay a label dataset against a real arrival trace.
    Real(RealArgs),
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Easiness score threshold, in (0, 1).
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    /// Smoothing constant of question easiness, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Batch budget; 0 means unbounded.
    #[arg(long, default_value_t = 20)]
    b: usize,
    /// fm, bm, oracle or baseline (a comma list for sweeps).
    #[arg(long, default_value = "fm")]
    algorithm: String,
    /// Repetitions per question for the baseline.
    #[arg(long, default_value_t = 3)]
    rep: usize,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: Format,
}

#[derive(Debug, Clone, Args)]
struct Population {
    #[arg(long, default_value_t = 250)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    l: usize,
    /// Workers arriving per batch.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Size of the worker pool (default: m).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    population: Population,
    /// Take the configuration from a `config.json` written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Parameter {
    M,
    Delta,
    B,
    Algorithm,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    population: Population,
    #[arg(long, value_enum)]
    param: Parameter,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
}

#[derive(Debug, Args)]
struct RealArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with header `worker_id,timestamp`.
    #[arg(long)]
    arrivals: PathBuf,
    /// CSV with header `worker_id,question_id,choice`.
    #[arg(long)]
    labels: PathBuf,
    /// CSV with header `question_id,truth`.
    #[arg(long)]
    truths: Option<PathBuf>,
}

/// Everything needed to repeat a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<String>,
    pub algorithms: Vec<String>,
    pub base: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RealEcho {
    arrivals: PathBuf,
    labels: PathBuf,
    truths: Option<PathBuf>,
    config: SimConfig,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_io() {
                EXIT_IO
            } else {
                EXIT_CONFIG
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // a second initialization (tests calling run_cli repeatedly) is harmless
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Real(args) => real(args),
    }
}

fn sim_config(common: &Common, population: &Population) -> SimConfig {
    SimConfig {
        m: population.m,
        l: population.l,
        delta: common.delta,
        b: common.b,
        lambda: population.lambda,
        workers: population.workers,
        seed: common.seed,
        algorithm: common.algorithm.clone(),
        baseline_rep: common.rep,
        runs: common.runs,
        estimator: EstimatorConfig {
            k: common.k,
            ..EstimatorConfig::default()
        },
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn print_summary(label: &str, report: &AggregateReport) {
    let s = Summary::of(report);
    println!(
        "{label}: accuracy {:.4} (se {:.4}), required batches {:.1} (se {:.1}), repetitions {:.3}, runs {}/{} completed",
        s.accuracy,
        s.accuracy_se,
        s.required_batches,
        s.required_batches_se,
        s.repetitions,
        s.completed_runs,
        s.runs
    );
}

fn run(args: RunArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => read_config(path)?,
        None => sim_config(&args.common, &args.population),
    };
    config.validate()?;
    prepare_out(&args.common.out)?;
    write_json(&args.common.out.join("config.json"), &config)?;
    let report = run_simulation(&config)?;
    export_report(&report, &args.common.out.join("report"), args.common.format)?;
    print_summary(&config.algorithm, &report);
    Ok(())
}

fn apply(base: &SimConfig, parameter: Parameter, value: &str) -> Result<SimConfig> {
    let bad = |what: &str| Error::Config(format!("sweep value `{value}` is not a valid {what}"));
    let mut config = base.clone();
    match parameter {
        Parameter::M => config.m = value.parse().map_err(|_| bad("question count"))?,
        Parameter::Delta => config.delta = value.parse().map_err(|_| bad("threshold"))?,
        Parameter::B => config.b = value.parse().map_err(|_| bad("batch count"))?,
        Parameter::Algorithm => config.algorithm = value.to_string(),
    }
    config.validate()?;
    Ok(config)
}

fn parameter_name(parameter: Parameter) -> &'static str {
    match parameter {
        Parameter::M => "m",
        Parameter::Delta => "delta",
        Parameter::B => "b",
        Parameter::Algorithm => "algorithm",
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = sim_config(&args.common, &args.population);
    let algorithms: Vec<String> = if args.param == Parameter::Algorithm {
        vec![base.algorithm.clone()]
    } else {
        args.common
            .algorithm
            .split(',')
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty())
            .collect()
    };

    // resolve every cell before running anything, so a bad value fails fast
    let mut cells = Vec::new();
    for value in &args.values {
        for algorithm in &algorithms {
            let mut config = apply(&base, args.param, value)?;
            if args.param != Parameter::Algorithm {
                config.algorithm = algorithm.clone();
            }
            crate::simulator::policy_by_name(
                &config.algorithm,
                config.baseline_rep,
                &crate::assignment::SolverRegistry::default(),
            )?;
            cells.push((value.clone(), config));
        }
    }

    prepare_out(&args.common.out)?;
    let spec = SweepSpec {
        parameter: parameter_name(args.param).to_string(),
        values: args.values.clone(),
        algorithms: algorithms.clone(),
        base,
    };
    write_json(&args.common.out.join("config.json"), &spec)?;

    let mut long = Vec::new();
    let mut wide = Vec::new();
    for (value, config) in &cells {
        let report = run_simulation(config)?;
        print_summary(&format!("{}={value} {}", spec.parameter, config.algorithm), &report);
        let s = Summary::of(&report);
        let num = |x: f64| round_sig(x, crate::dataio::SIGNIFICANT_DIGITS).to_string();
        for (metric, e) in [
            ("accuracy", report.accuracy),
            ("required_batches", report.required_batches),
            ("repetitions", report.repetitions),
            ("total_assignments", report.total_assignments),
        ] {
            long.push([
                spec.parameter.clone(),
                value.clone(),
                config.algorithm.clone(),
                metric.to_string(),
                num(e.mean),
                num(e.std_err),
            ]);
        }
        wide.push([
            spec.parameter.clone(),
            value.clone(),
            config.algorithm.clone(),
            num(s.accuracy),
            num(s.accuracy_se),
            num(s.required_batches),
            num(s.required_batches_se),
            num(s.repetitions),
            num(s.total_assignments),
        ]);
    }
    write_rows(
        &args.common.out.join("sweep.csv"),
        &["parameter", "value", "algorithm", "metric", "mean", "std_err"],
        long,
    )?;
    write_rows(
        &args.common.out.join("sweep_summary.csv"),
        &[
            "parameter",
            "value",
            "algorithm",
            "accuracy",
            "accuracy_se",
            "required_batches",
            "required_batches_se",
            "repetitions",
            "total_assignments",
        ],
        wide,
    )
}

fn real(args: RealArgs) -> Result<()> {
    let common = &args.common;
    if common.b == 0 {
        return Err(Error::Config(
            "real-data replay needs a finite batch count, got --b 0".into(),
        ));
    }
    let config = SimConfig {
        delta: common.delta,
        b: common.b,
        seed: common.seed,
        algorithm: common.algorithm.clone(),
        baseline_rep: common.rep,
        runs: common.runs,
        estimator: EstimatorConfig {
            k: common.k,
            ..EstimatorConfig::default()
        },
        ..SimConfig::default()
    };
    crate::simulator::policy_by_name(
        &config.algorithm,
        config.baseline_rep,
        &crate::assignment::SolverRegistry::default(),
    )?;
    let trace = parse_arrivals(&args.arrivals)?;
    let labels = parse_labels(&args.labels, args.truths.as_deref())?;

    prepare_out(&common.out)?;
    let report = run_replay(&labels, &trace, &config)?;
    write_json(
        &common.out.join("config.json"),
        &RealEcho {
            arrivals: args.arrivals.clone(),
            labels: args.labels.clone(),
            truths: args.truths.clone(),
            config: report.config.clone(),
        },
    )?;
    export_report(&report, &common.out.join("report"), common.format)?;
    print_summary(&config.algorithm, &report);
    if !labels.truths.is_empty() {
        println!(
            "majority vote: {:.4} over consumed votes (first matching), {:.4} over all labels",
            consumed_majority_accuracy(&report.detail, labels.num_choices()),
            label_majority_accuracy(&labels)
        );
    }
    Ok(())
}
