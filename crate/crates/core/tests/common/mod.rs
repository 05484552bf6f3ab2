//! Synthetic stand-ins for a real label matrix and submission trace.
#![allow(dead_code)]

use std::collections::BTreeMap;

use batchcrowd::dataio::{Arrival, ArrivalTrace, Label, LabelSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABEL_WORKERS: usize = 39;
pub const LABEL_QUESTIONS: usize = 108;
pub const TRACE_ROWS: usize = 18_062;
pub const TRACE_WORKERS: usize = 60;
pub const DAY: i64 = 86_400;
pub const DAYS: i64 = 20;
pub const EPOCH: i64 = 1_420_070_400;

/// Every worker labels every binary question; worker accuracy is uniform in
/// [0.55, 0.9].
pub fn full_label_matrix(seed: u64) -> LabelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truths: BTreeMap<String, usize> = (0..LABEL_QUESTIONS)
        .map(|q| (q.to_string(), rng.random_range(0..2)))
        .collect();
    let mut labels = Vec::with_capacity(LABEL_WORKERS * LABEL_QUESTIONS);
    for w in 0..LABEL_WORKERS {
        let accuracy = rng.random_range(0.55..0.9);
        for q in 0..LABEL_QUESTIONS {
            let truth = truths[&q.to_string()];
            let choice = if rng.random::<f64>() < accuracy { truth } else { 1 - truth };
            labels.push(Label {
                worker: format!("w{w:02}"),
                question: q.to_string(),
                choice,
            });
        }
    }
    LabelSet { labels, truths }
}

/// `TRACE_ROWS` submissions spread over `DAYS` whole days. The first and
/// last seconds of the span are always present.
pub fn submission_trace(seed: u64) -> ArrivalTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end = EPOCH + DAYS * DAY - 1;
    let mut records: Vec<Arrival> = (0..TRACE_ROWS)
        .map(|i| Arrival {
            worker: format!("t{}", rng.random_range(0..TRACE_WORKERS)),
            timestamp: match i {
                0 => EPOCH,
                1 => end,
                _ => rng.random_range(EPOCH..=end),
            },
        })
        .collect();
    // make sure every trace worker shows up
    for (i, r) in records.iter_mut().take(TRACE_WORKERS).enumerate() {
        r.worker = format!("t{i}");
    }
    records.sort_by_key(|r| r.timestamp);
    ArrivalTrace { records }
}
