//! Replays a label dataset under dynamic assignment, with worker arrivals
//! taken from a real trace.
//!
//! A label worker's vote is used when the policy assigns them a question
//! they labelled. Pairs absent from the labels are drawn from the worker's
//! current estimated model and flagged `synth`. Votes come in during the
//! batch they were assigned in.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    policy_by_name, run_to_completion, stream_rng, AggregateReport, SimConfig, SimReport, SimState,
    VoteOrigin, VoteSource, ASSIGNMENT_STREAM, VOTE_STREAM,
};
use crate::assignment::{answer_probability, SolverRegistry};
use crate::dataio::{match_and_schedule, ArrivalTrace, LabelSet};
use crate::error::{Error, Result};
use crate::inference::{EstimationState, QuestionId, WorkerId};

/// Dense ids for a label set: workers and questions in sorted order.
pub struct Indexed<'a> {
    pub workers: Vec<&'a str>,
    pub questions: Vec<&'a str>,
    pub num_choices: usize,
    /// (worker, question) -> choice.
    pub votes: HashMap<(usize, usize), usize>,
}

impl<'a> Indexed<'a> {
    pub fn new(labels: &'a LabelSet) -> Self {
        let workers = labels.workers();
        let questions = labels.questions();
        let w_index: HashMap<&str, usize> = workers.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        let q_index: HashMap<&str, usize> =
            questions.iter().enumerate().map(|(i, &q)| (q, i)).collect();
        let votes = labels
            .labels
            .iter()
            .map(|l| {
                (
                    (w_index[l.worker.as_str()], q_index[l.question.as_str()]),
                    l.choice,
                )
            })
            .collect();
        Indexed {
            workers,
            questions,
            num_choices: labels.num_choices(),
            votes,
        }
    }
}

struct LabelVotes<'a> {
    observed: &'a HashMap<(usize, usize), usize>,
    rng: ChaCha8Rng,
}

impl VoteSource for LabelVotes<'_> {
    fn vote(
        &mut self,
        worker: WorkerId,
        question: QuestionId,
        state: &EstimationState,
    ) -> Result<(usize, VoteOrigin)> {
        if let Some(&choice) = self.observed.get(&(worker.0, question.0)) {
            return Ok((choice, VoteOrigin::Observed));
        }
        let probabilities = answer_probability(&state.workers[worker.0], &state.questions[question.0]);
        let mut u = self.rng.random::<f64>();
        for (choice, &p) in probabilities.iter().enumerate() {
            if u < p {
                return Ok((choice, VoteOrigin::Synth));
            }
            u -= p;
        }
        Ok((probabilities.len() - 1, VoteOrigin::Synth))
    }
}

/// Checks a replay configuration; the question and choice counts come from
/// the labels, so only the remaining fields matter.
fn check(config: &SimConfig) -> Result<()> {
    if config.b == 0 {
        return Err(Error::Config("a replay needs a finite batch count b >= 1".into()));
    }
    let probe = SimConfig {
        m: 1,
        l: 2,
        lambda: 1.0,
        workers: Some(1),
        ..config.clone()
    };
    probe.validate()
}

/// One replay with the matching drawn from `seed`.
pub fn replay_once(
    labels: &LabelSet,
    trace: &ArrivalTrace,
    config: &SimConfig,
    seed: u64,
) -> Result<SimReport> {
    check(config)?;
    let indexed = Indexed::new(labels);
    if indexed.questions.is_empty() {
        return Err(Error::Data("label set has no questions".into()));
    }
    let config = SimConfig {
        m: indexed.questions.len(),
        l: indexed.num_choices,
        workers: Some(indexed.workers.len()),
        ..config.clone()
    };
    let policy = policy_by_name(&config.algorithm, config.baseline_rep, &SolverRegistry::default())?;
    let schedule = match_and_schedule(labels, trace, config.b, seed)?;

    let worker_ids: HashMap<&str, WorkerId> = indexed
        .workers
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, WorkerId(i)))
        .collect();
    let batches: Vec<Vec<WorkerId>> = schedule
        .batches
        .iter()
        .map(|names| {
            let mut seen = Vec::new();
            for name in names {
                let id = worker_ids[name.as_str()];
                if !seen.contains(&id) {
                    seen.push(id);
                }
            }
            seen
        })
        .collect();

    let mut estimation = EstimationState::new(config.m, config.l, indexed.workers.len())?;
    for (question, name) in estimation.questions.iter_mut().zip(&indexed.questions) {
        question.truth = labels.truths.get(*name).copied();
    }

    let mut arrivals = |batch: usize| batches.get(batch).cloned().unwrap_or_default();
    let mut votes = LabelVotes {
        observed: &indexed.votes,
        rng: stream_rng(seed, VOTE_STREAM),
    };
    let mut rng = stream_rng(seed, ASSIGNMENT_STREAM);
    run_to_completion(
        SimState::new(estimation),
        policy.as_ref(),
        &config,
        config.b,
        &mut arrivals,
        &mut votes,
        &mut rng,
        seed,
    )
}

/// `config.runs` replays over matchings seeded `seed, seed + 1, ...`.
pub fn run_replay(labels: &LabelSet, trace: &ArrivalTrace, config: &SimConfig) -> Result<AggregateReport> {
    check(config)?;
    let reports = (0..config.runs)
        .into_par_iter()
        .map(|r| replay_once(labels, trace, config, config.run_seed(r)))
        .collect::<Result<Vec<_>>>()?;
    let mut resolved = config.clone();
    resolved.m = reports[0].per_question.len();
    resolved.l = labels.num_choices();
    resolved.workers = Some(labels.workers().len());
    Ok(AggregateReport::from_runs(&resolved, reports))
}

/// Accuracy of a per-question majority vote (ties to the lowest choice)
/// over the votes a replay consumed.
pub fn consumed_majority_accuracy(report: &SimReport, num_choices: usize) -> f64 {
    let mut counts: HashMap<QuestionId, Vec<usize>> = HashMap::new();
    for a in &report.assignments {
        counts.entry(a.question).or_insert_with(|| vec![0; num_choices])[a.choice] += 1;
    }
    majority_accuracy(
        report.per_question.iter().filter_map(|q| q.truth.map(|t| (q.question, t))),
        |q| counts.get(&q).cloned().unwrap_or_else(|| vec![0; num_choices]),
    )
}

/// Accuracy of a majority vote over every label in the set.
pub fn label_majority_accuracy(labels: &LabelSet) -> f64 {
    let indexed = Indexed::new(labels);
    let mut counts: HashMap<QuestionId, Vec<usize>> = HashMap::new();
    for (&(_, q), &c) in &indexed.votes {
        counts.entry(QuestionId(q)).or_insert_with(|| vec![0; indexed.num_choices])[c] += 1;
    }
    let truths = indexed
        .questions
        .iter()
        .enumerate()
        .filter_map(|(i, name)| labels.truths.get(*name).map(|&t| (QuestionId(i), t)));
    majority_accuracy(truths, |q| {
        counts.get(&q).cloned().unwrap_or_else(|| vec![0; indexed.num_choices])
    })
}

fn majority_accuracy(
    truths: impl Iterator<Item = (QuestionId, usize)>,
    counts: impl Fn(QuestionId) -> Vec<usize>,
) -> f64 {
    let mut judged = 0usize;
    let mut correct = 0usize;
    for (q, truth) in truths {
        let c = counts(q);
        let mut best = 0;
        for (k, &n) in c.iter().enumerate() {
            if n > c[best] {
                best = k;
            }
        }
        judged += 1;
        if best == truth {
            correct += 1;
        }
    }
    if judged == 0 {
        0.0
    } else {
        correct as f64 / judged as f64
    }
}
