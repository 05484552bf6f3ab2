//! Arrival traces, label sets, batch schedules and report files.
//!
//! All inputs are UTF-8 CSV with a header row; timestamps are integer epoch
//! seconds.

mod export;

pub use export::{
    export_report, read_summary, round_sig, write_assignments, write_convergence, Format, Summary,
    SIGNIFICANT_DIGITS,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ARRIVAL_HEADER: [&str; 2] = ["worker_id", "timestamp"];
const LABEL_HEADER: [&str; 3] = ["worker_id", "question_id", "choice"];
const TRUTH_HEADER: [&str; 2] = ["question_id", "truth"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub worker: String,
    pub timestamp: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalTrace {
    pub records: Vec<Arrival>,
}

impl ArrivalTrace {
    /// Earliest and latest timestamp.
    pub fn span(&self) -> Option<(i64, i64)> {
        let min = self.records.iter().map(|r| r.timestamp).min()?;
        let max = self.records.iter().map(|r| r.timestamp).max()?;
        Some((min, max))
    }

    pub fn workers(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.worker.as_str()).collect();
        set.into_iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub worker: String,
    pub question: String,
    pub choice: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: Vec<Label>,
    pub truths: BTreeMap<String, usize>,
}

impl LabelSet {
    /// Choices per question: one more than the largest index seen, at least 2.
    pub fn num_choices(&self) -> usize {
        let labels = self.labels.iter().map(|l| l.choice);
        let truths = self.truths.values().copied();
        labels.chain(truths).max().map_or(2, |c| (c + 1).max(2))
    }

    /// Distinct workers, sorted.
    pub fn workers(&self) -> Vec<&str> {
        sorted_ids(self.labels.iter().map(|l| l.worker.as_str()))
    }

    /// Distinct questions (from labels and truths), sorted.
    pub fn questions(&self) -> Vec<&str> {
        sorted_ids(
            self.labels
                .iter()
                .map(|l| l.question.as_str())
                .chain(self.truths.keys().map(String::as_str)),
        )
    }
}

/// Numeric ids sort by value and come before all other ids, which sort as
/// text.
fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let set: BTreeSet<&str> = ids.collect();
    let mut ids: Vec<&str> = set.into_iter().collect();
    ids.sort_by_key(|id| match id.parse::<u64>() {
        Ok(n) => (0, n, *id),
        Err(_) => (1, 0, *id),
    });
    ids
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    Error::parse(path, line, err.to_string())
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn field<'r>(path: &Path, line: u64, record: &'r csv::StringRecord, i: usize, name: &str) -> Result<&'r str> {
    match record.get(i) {
        Some(value) if !value.is_empty() => Ok(value),
        _ => Err(Error::parse(path, line, format!("empty {name}"))),
    }
}

fn number<T: std::str::FromStr>(path: &Path, line: u64, text: &str, name: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::parse(path, line, format!("{name} `{text}` is not a valid integer")))
}

pub fn parse_arrivals(path: impl AsRef<Path>) -> Result<ArrivalTrace> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &ARRIVAL_HEADER)?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let worker = field(path, line, &row, 0, "worker_id")?.to_string();
        let timestamp = number(path, line, field(path, line, &row, 1, "timestamp")?, "timestamp")?;
        records.push(Arrival { worker, timestamp });
    }
    Ok(ArrivalTrace { records })
}

/// Reads labels and, when given, the truth file. An empty truth file means
/// no truths.
pub fn parse_labels(path: impl AsRef<Path>, truth_path: Option<&Path>) -> Result<LabelSet> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &LABEL_HEADER)?;
    let mut labels = Vec::new();
    let mut seen: HashMap<(String, String), u64> = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let worker = field(path, line, &row, 0, "worker_id")?.to_string();
        let question = field(path, line, &row, 1, "question_id")?.to_string();
        let choice = number(path, line, field(path, line, &row, 2, "choice")?, "choice")?;
        if let Some(first) = seen.insert((worker.clone(), question.clone()), line) {
            return Err(Error::parse(
                path,
                line,
                format!("worker {worker} already answered question {question} on line {first}"),
            ));
        }
        labels.push(Label {
            worker,
            question,
            choice,
        });
    }

    let mut set = LabelSet {
        labels,
        truths: BTreeMap::new(),
    };
    if let Some(truth_path) = truth_path {
        set.truths = parse_truths(truth_path, &set)?;
    }
    Ok(set)
}

fn parse_truths(path: &Path, labels: &LabelSet) -> Result<BTreeMap<String, usize>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(BTreeMap::new());
    }
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &TRUTH_HEADER)?;
    let known: BTreeSet<&str> = labels.labels.iter().map(|l| l.question.as_str()).collect();
    let mut truths = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let question = field(path, line, &row, 0, "question_id")?;
        if !known.contains(question) {
            return Err(Error::parse(path, line, format!("unknown question {question}")));
        }
        let truth = number(path, line, field(path, line, &row, 1, "truth")?, "truth")?;
        if truths.insert(question.to_string(), truth).is_some() {
            return Err(Error::parse(path, line, format!("second truth for question {question}")));
        }
    }
    Ok(truths)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub(crate) fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_arrivals(trace: &ArrivalTrace, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &ARRIVAL_HEADER,
        trace
            .records
            .iter()
            .map(|r| [r.worker.clone(), r.timestamp.to_string()]),
    )
}

pub fn write_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &LABEL_HEADER,
        labels
            .labels
            .iter()
            .map(|l| [l.worker.clone(), l.question.clone(), l.choice.to_string()]),
    )
}

pub fn write_truths(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &TRUTH_HEADER,
        labels.truths.iter().map(|(q, t)| [q.clone(), t.to_string()]),
    )
}

/// Arrivals of label workers bucketed into `b` equal slices of the trace's
/// time span.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub b: usize,
    pub span: (i64, i64),
    /// Label worker to the trace worker whose arrivals they inherit.
    pub matching: BTreeMap<String, String>,
    /// Label workers arriving in each batch, in time order. A worker appears
    /// once per arrival event.
    pub batches: Vec<Vec<String>>,
}

impl BatchSchedule {
    /// Batch of a timestamp. The span is read as the half-open interval
    /// [min, max + 1) so integer timestamps split into equal slices.
    pub fn batch_of(&self, timestamp: i64) -> usize {
        let (min, max) = self.span;
        let width = (max - min) as i128 + 1;
        let slot = (timestamp - min) as i128 * self.b as i128 / width;
        (slot.max(0) as usize).min(self.b - 1)
    }
}

/// Matches every label worker to a distinct, uniformly chosen trace worker
/// and buckets the inherited arrivals into `b` batches.
pub fn match_and_schedule(
    labels: &LabelSet,
    trace: &ArrivalTrace,
    b: usize,
    seed: u64,
) -> Result<BatchSchedule> {
    if b == 0 {
        return Err(Error::Config("a replay needs a finite batch count b >= 1".into()));
    }
    let span = trace
        .span()
        .ok_or_else(|| Error::Data("arrival trace is empty".into()))?;
    let label_workers = labels.workers();
    let trace_workers = trace.workers();
    if trace_workers.len() < label_workers.len() {
        return Err(Error::Data(format!(
            "{} label workers but only {} distinct trace workers",
            label_workers.len(),
            trace_workers.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, trace_workers.len(), label_workers.len());
    let mut matching = BTreeMap::new();
    let mut reverse: HashMap<&str, &str> = HashMap::new();
    for (label_worker, pick) in label_workers.iter().zip(picks) {
        matching.insert(label_worker.to_string(), trace_workers[pick].to_string());
        reverse.insert(trace_workers[pick], label_worker);
    }

    let mut schedule = BatchSchedule {
        b,
        span,
        matching,
        batches: vec![Vec::new(); b],
    };
    let mut events: Vec<(i64, &str)> = trace
        .records
        .iter()
        .filter_map(|r| reverse.get(r.worker.as_str()).map(|&w| (r.timestamp, w)))
        .collect();
    events.sort();
    for (t, w) in events {
        let batch = schedule.batch_of(t);
        schedule.batches[batch].push(w.to_string());
    }
    Ok(schedule)
}
