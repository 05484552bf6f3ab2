use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::write_rows;
use crate::error::{Error, Result};
use crate::inference::ConvergenceTrace;
use crate::simulator::{AggregateReport, AssignmentRecord};

/// Significant digits of every exported real number.
pub const SIGNIFICANT_DIGITS: usize = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (expected json or csv)"
            ))),
        }
    }
}

pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("formatted float parses")
}

fn num(x: f64) -> String {
    round_sig(x, SIGNIFICANT_DIGITS).to_string()
}

fn round_value(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(rounded) = serde_json::Number::from_f64(round_sig(x, SIGNIFICANT_DIGITS)) {
                *n = rounded;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Headline numbers of an aggregate report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub runs: usize,
    pub completed_runs: usize,
    pub accuracy: f64,
    pub accuracy_se: f64,
    pub required_batches: f64,
    pub required_batches_se: f64,
    pub repetitions: f64,
    pub total_assignments: f64,
}

impl Summary {
    pub fn of(report: &AggregateReport) -> Self {
        Summary {
            algorithm: report.config.algorithm.clone(),
            runs: report.runs.len(),
            completed_runs: report.completed_runs,
            accuracy: report.accuracy.mean,
            accuracy_se: report.accuracy.std_err,
            required_batches: report.required_batches.mean,
            required_batches_se: report.required_batches.std_err,
            repetitions: report.repetitions.mean,
            total_assignments: report.total_assignments.mean,
        }
    }

    /// The same summary with every real rounded as it is written to disk.
    pub fn rounded(&self) -> Self {
        let r = |x| round_sig(x, SIGNIFICANT_DIGITS);
        Summary {
            accuracy: r(self.accuracy),
            accuracy_se: r(self.accuracy_se),
            required_batches: r(self.required_batches),
            required_batches_se: r(self.required_batches_se),
            repetitions: r(self.repetitions),
            total_assignments: r(self.total_assignments),
            ..self.clone()
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Writes `report` next to `prefix`: `<prefix>.json`, or for CSV the files
/// `<prefix>_summary.csv`, `_batches.csv`, `_questions.csv`,
/// `_assignments.csv` and `_convergence.csv` (per-batch detail is that of
/// the first run). Returns the files written.
pub fn export_report(report: &AggregateReport, prefix: &Path, format: Format) -> Result<Vec<PathBuf>> {
    match format {
        Format::Json => {
            let path = with_suffix(prefix, ".json");
            let mut value = serde_json::to_value(report)?;
            round_value(&mut value);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut out, &value)?;
            out.write_all(b"\n")
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        Format::Csv => {
            let detail = &report.detail;
            let summary = with_suffix(prefix, "_summary.csv");
            let s = Summary::of(report);
            write_rows(
                &summary,
                &[
                    "algorithm",
                    "runs",
                    "completed_runs",
                    "accuracy",
                    "accuracy_se",
                    "required_batches",
                    "required_batches_se",
                    "repetitions",
                    "total_assignments",
                ],
                [[
                    s.algorithm.clone(),
                    s.runs.to_string(),
                    s.completed_runs.to_string(),
                    num(s.accuracy),
                    num(s.accuracy_se),
                    num(s.required_batches),
                    num(s.required_batches_se),
                    num(s.repetitions),
                    num(s.total_assignments),
                ]],
            )?;

            let batches = with_suffix(prefix, "_batches.csv");
            write_rows(
                &batches,
                &["batch_index", "arrived", "assigned", "opened", "returned", "overflow"],
                detail.per_batch.iter().map(|b| {
                    [b.batch, b.arrived, b.assigned, b.opened, b.returned, b.overflow]
                        .map(|v| v.to_string())
                }),
            )?;

            let questions = with_suffix(prefix, "_questions.csv");
            let opt = |v: Option<usize>| v.map_or_else(String::new, |v| v.to_string());
            write_rows(
                &questions,
                &[
                    "question_id",
                    "returned_batch",
                    "forced",
                    "repetitions",
                    "answer",
                    "truth",
                    "correct",
                    "confidences",
                ],
                detail.per_question.iter().map(|q| {
                    [
                        q.question.0.to_string(),
                        opt(q.returned_batch),
                        q.forced.to_string(),
                        q.repetitions.to_string(),
                        q.answer.to_string(),
                        opt(q.truth),
                        q.correct.map_or_else(String::new, |c| c.to_string()),
                        q.confidences.iter().map(|&c| num(c)).collect::<Vec<_>>().join(";"),
                    ]
                }),
            )?;

            let assignments = with_suffix(prefix, "_assignments.csv");
            write_assignments(&detail.assignments, &assignments)?;
            let convergence = with_suffix(prefix, "_convergence.csv");
            write_convergence(&detail.convergence_traces, &convergence)?;
            Ok(vec![summary, batches, questions, assignments, convergence])
        }
    }
}

pub fn write_assignments(records: &[AssignmentRecord], path: &Path) -> Result<()> {
    write_rows(
        path,
        &[
            "batch_index",
            "worker_id",
            "question_id",
            "choice",
            "overflow_flag",
            "origin",
        ],
        records.iter().map(|a| {
            [
                a.batch.to_string(),
                a.worker.0.to_string(),
                a.question.0.to_string(),
                a.choice.to_string(),
                a.overflow.to_string(),
                serde_json::to_value(a.origin)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
            ]
        }),
    )
}

/// One row per external iteration of every batch's estimation.
pub fn write_convergence(traces: &[ConvergenceTrace], path: &Path) -> Result<()> {
    write_rows(
        path,
        &["batch_index", "external_iteration", "mean_abs_confidence_change"],
        traces.iter().enumerate().flat_map(|(batch, trace)| {
            trace
                .changes
                .iter()
                .enumerate()
                .map(move |(i, &c)| [batch.to_string(), (i + 1).to_string(), num(c)])
        }),
    )
}

/// Reads the summary back from `<prefix>.json` or `<prefix>_summary.csv`.
pub fn read_summary(prefix: &Path, format: Format) -> Result<Summary> {
    match format {
        Format::Json => {
            let path = with_suffix(prefix, ".json");
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let report: AggregateReport = serde_json::from_reader(std::io::BufReader::new(file))?;
            Ok(Summary::of(&report))
        }
        Format::Csv => {
            let path = with_suffix(prefix, "_summary.csv");
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let mut rdr = csv::Reader::from_reader(file);
            match rdr.deserialize().next() {
                Some(row) => Ok(row?),
                None => Err(Error::parse(&path, 2, "missing summary row")),
            }
        }
    }
}
