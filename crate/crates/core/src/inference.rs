//! Dual-cycle estimation of worker expertise, answer confidence and question
//! easiness from votes.
//!
//! The left cycle alternates between answer confidence and worker expertise:
//! a worker's expertise is the mean confidence of the answers they voted, and
//! an answer's confidence score is the sum of the expertise scores of its
//! voters. The right cycle alternates between answer confidence and question
//! easiness: easiness grows with the spread of the confidences and scales the
//! confidences back down for uncertain questions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest expertise fed into `-ln(1 - e)`.
pub const EXPERTISE_CAP: f64 = 1.0 - 1e-9;

/// Starting value for expertise, easiness and (binary) answer confidence.
pub const INITIAL_ESTIMATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(pub usize);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln(1 - e)` with `e` clamped into `[0, EXPERTISE_CAP]`.
#[inline]
pub fn expertise_score_of(expertise: f64) -> f64 {
    -(1.0 - expertise.clamp(0.0, EXPERTISE_CAP)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub worker: WorkerId,
    pub question: QuestionId,
    pub choice: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub id: WorkerId,
    /// e(w), kept in `[0, EXPERTISE_CAP]`.
    pub expertise: f64,
    /// sc.e(w) = -ln(1 - e(w)).
    pub expertise_score: f64,
    /// Question -> voted choice. At most one vote per question.
    pub answered: BTreeMap<QuestionId, usize>,
}

impl WorkerState {
    pub fn new(id: WorkerId) -> Self {
        let mut worker = WorkerState {
            id,
            expertise: 0.0,
            expertise_score: 0.0,
            answered: BTreeMap::new(),
        };
        worker.set_expertise(INITIAL_ESTIMATE);
        worker
    }

    pub fn set_expertise(&mut self, expertise: f64) {
        self.expertise = expertise.clamp(0.0, EXPERTISE_CAP);
        self.expertise_score = expertise_score_of(self.expertise);
    }

    pub fn has_answered(&self, question: QuestionId) -> bool {
        self.answered.contains_key(&question)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionStatus {
    Closed,
    Open,
    Returned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionState {
    pub id: QuestionId,
    pub num_choices: usize,
    /// Ground truth, known only in simulation or for gold questions.
    pub truth: Option<usize>,
    /// c(a), normalized at the end of every estimation round.
    pub confidences: Vec<f64>,
    /// sc.c(a) after the binary influence adjustment.
    pub confidence_scores: Vec<f64>,
    /// Per-choice sum of voter expertise scores, before any influence adjustment.
    pub vote_scores: Vec<f64>,
    /// sc.d(q) of the normalized confidences.
    pub easiness_score: f64,
    /// d(q).
    pub easiness: f64,
    pub status: QuestionStatus,
    pub votes: Vec<Vote>,
}

impl QuestionState {
    pub fn new(id: QuestionId, num_choices: usize) -> Result<Self> {
        if num_choices < 2 {
            return Err(Error::InvalidQuestion {
                question: id,
                num_choices,
            });
        }
        let mut confidences = vec![INITIAL_ESTIMATE; num_choices];
        normalize(&mut confidences);
        Ok(QuestionState {
            id,
            num_choices,
            truth: None,
            easiness_score: pairwise_spread(&confidences),
            confidences,
            confidence_scores: vec![0.0; num_choices],
            vote_scores: vec![0.0; num_choices],
            easiness: INITIAL_ESTIMATE,
            status: QuestionStatus::Closed,
            votes: Vec::new(),
        })
    }

    pub fn with_truth(mut self, truth: usize) -> Self {
        self.truth = Some(truth);
        self
    }

    /// Highest-confidence choice, ties to the lowest index.
    pub fn inferred_truth(&self) -> usize {
        argmax(&self.confidences)
    }
}

/// Index of the largest element, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn normalize(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        for v in values.iter_mut() {
            *v /= total;
        }
    }
}

fn pairwise_spread(confidences: &[f64]) -> f64 {
    let l = confidences.len();
    let mut total = 0.0;
    for i in 0..l {
        for j in (i + 1)..l {
            total += (confidences[i] - confidences[j]).abs();
        }
    }
    total / (l * (l - 1) / 2) as f64
}

/// When answer confidences are put back on the simplex.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// After every confidence update. The easiness factor then cancels out of
    /// every confidence and the right cycle has no effect.
    EveryPass,
    /// Once per external iteration, after both cycles have run. Inside the
    /// cycles confidences stay scaled by the question easiness.
    #[default]
    PerExternalIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Smoothing constant in d(q) = 1 / (1 + k e^{-sc.d(q)}), in (0, 1].
    pub k: f64,
    pub inner_iterations: usize,
    pub external_iterations: usize,
    pub early_stop_tolerance: f64,
    pub binary_influence: bool,
    #[serde(default)]
    pub normalization: Normalization,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k: 1.0,
            inner_iterations: 5,
            external_iterations: 10,
            early_stop_tolerance: 1e-6,
            binary_influence: true,
            normalization: Normalization::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        if self.inner_iterations == 0 || self.external_iterations == 0 {
            return Err(Error::Config(
                "inner and external iteration counts must be at least 1".into(),
            ));
        }
        if !(self.early_stop_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "early stop tolerance must be >= 0, got {}",
                self.early_stop_tolerance
            )));
        }
        Ok(())
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "smoothing constant k must lie in (0, 1], got {k}"
        )))
    }
}

/// e(w) = mean confidence of the choices the worker voted. A worker without
/// answers keeps their current expertise.
pub fn update_expertise(worker: &mut WorkerState, questions: &[QuestionState]) {
    if worker.answered.is_empty() {
        return;
    }
    let mut total = 0.0;
    for (question, &choice) in &worker.answered {
        total += questions[question.0].confidences[choice];
    }
    worker.set_expertise(total / worker.answered.len() as f64);
}

/// sc.c(a) = sum of sc.e over the workers who voted a, followed by the binary
/// influence adjustment when enabled and the question has two choices.
pub fn update_confidence_scores(
    question: &mut QuestionState,
    workers: &[WorkerState],
    config: &EstimatorConfig,
) -> Result<()> {
    question.vote_scores.iter_mut().for_each(|s| *s = 0.0);
    for vote in &question.votes {
        let worker = workers
            .get(vote.worker.0)
            .ok_or(Error::UnknownWorker(vote.worker))?;
        question.vote_scores[vote.choice] += worker.expertise_score;
    }
    apply_influence(
        &question.vote_scores,
        &mut question.confidence_scores,
        config.binary_influence,
    );
    Ok(())
}

/// Copies `raw` into `adjusted`, replacing a binary pair (s1, s2) with
/// (s1 - s2, s2 - s1) when `binary_influence` is set.
pub fn apply_influence(raw: &[f64], adjusted: &mut [f64], binary_influence: bool) {
    if binary_influence && raw.len() == 2 {
        adjusted[0] = raw[0] - raw[1];
        adjusted[1] = raw[1] - raw[0];
    } else {
        adjusted.copy_from_slice(raw);
    }
}

/// c(a) = d(q) / (1 + e^{-sc.c(a)}), normalized over the choices.
pub fn update_confidences(question: &mut QuestionState) {
    scale_confidences(question);
    normalize(&mut question.confidences);
}

fn scale_confidences(question: &mut QuestionState) {
    let d = question.easiness;
    for (c, &score) in question
        .confidences
        .iter_mut()
        .zip(&question.confidence_scores)
    {
        *c = d * logistic(score);
    }
}

/// sc.d(q): mean absolute difference over all unordered pairs of choices.
pub fn easiness_score(question: &QuestionState) -> Result<f64> {
    if question.confidences.len() < 2 {
        return Err(Error::InvalidQuestion {
            question: question.id,
            num_choices: question.confidences.len(),
        });
    }
    Ok(pairwise_spread(&question.confidences))
}

/// d(q) = 1 / (1 + k e^{-sc.d(q)}), which lies in [1/(1+k), 1).
pub fn easiness(score: f64, k: f64) -> Result<f64> {
    check_k(k)?;
    Ok(1.0 / (1.0 + k * (-score).exp()))
}

/// Mean absolute change of the normalized answer confidences, one entry per
/// external iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub changes: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}

/// All estimation state for one question pool.
///
/// Questions and workers are stored densely: `questions[i].id == QuestionId(i)`
/// and `workers[i].id == WorkerId(i)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimationState {
    pub questions: Vec<QuestionState>,
    pub workers: Vec<WorkerState>,
}

impl EstimationState {
    pub fn new(num_questions: usize, num_choices: usize, num_workers: usize) -> Result<Self> {
        let questions = (0..num_questions)
            .map(|i| QuestionState::new(QuestionId(i), num_choices))
            .collect::<Result<Vec<_>>>()?;
        let workers = (0..num_workers).map(|i| WorkerState::new(WorkerId(i))).collect();
        Ok(EstimationState { questions, workers })
    }

    pub fn add_vote(&mut self, vote: Vote) -> Result<()> {
        let question = self
            .questions
            .get_mut(vote.question.0)
            .ok_or(Error::UnknownQuestion(vote.question))?;
        if vote.choice >= question.num_choices {
            return Err(Error::ChoiceOutOfRange {
                question: vote.question,
                choice: vote.choice,
                num_choices: question.num_choices,
            });
        }
        let worker = self
            .workers
            .get_mut(vote.worker.0)
            .ok_or(Error::UnknownWorker(vote.worker))?;
        if worker.has_answered(vote.question) {
            return Err(Error::AlreadyAnswered {
                worker: vote.worker,
                question: vote.question,
            });
        }
        worker.answered.insert(vote.question, vote.choice);
        question.votes.push(vote);
        Ok(())
    }

    pub fn vote_count(&self) -> usize {
        self.questions.iter().map(|q| q.votes.len()).sum()
    }

    /// Resets every estimate to its initial value, keeping the votes.
    pub fn reset_estimates(&mut self) {
        for worker in &mut self.workers {
            worker.set_expertise(INITIAL_ESTIMATE);
        }
        for question in &mut self.questions {
            let fresh = QuestionState::new(question.id, question.num_choices)
                .expect("existing question has a valid choice count");
            question.confidences = fresh.confidences;
            question.confidence_scores = fresh.confidence_scores;
            question.vote_scores = fresh.vote_scores;
            question.easiness_score = fresh.easiness_score;
            question.easiness = fresh.easiness;
        }
    }
}

/// Runs the dual-cycle estimator to a fixed point (or the iteration limit).
pub fn run_estimation(
    state: &mut EstimationState,
    config: &EstimatorConfig,
) -> Result<ConvergenceTrace> {
    config.validate()?;
    for question in &state.questions {
        if question.num_choices < 2 {
            return Err(Error::InvalidQuestion {
                question: question.id,
                num_choices: question.num_choices,
            });
        }
        for vote in &question.votes {
            if vote.worker.0 >= state.workers.len() {
                return Err(Error::UnknownWorker(vote.worker));
            }
        }
    }

    // (question, choice) of every worker's answers; fixed during estimation
    let mut answers: Vec<Vec<(usize, usize)>> = Vec::with_capacity(state.workers.len());
    for worker in &state.workers {
        let mut list = Vec::with_capacity(worker.answered.len());
        for (&q, &c) in &worker.answered {
            match state.questions.get(q.0) {
                Some(question) if c < question.num_choices => list.push((q.0, c)),
                Some(question) => {
                    return Err(Error::ChoiceOutOfRange {
                        question: q,
                        choice: c,
                        num_choices: question.num_choices,
                    })
                }
                None => return Err(Error::UnknownQuestion(q)),
            }
        }
        answers.push(list);
    }

    let every_pass = config.normalization == Normalization::EveryPass;
    let mut trace = ConvergenceTrace::default();
    let mut previous: Vec<f64> = Vec::new();
    // logistic(sc.c) per (question, choice); only the left cycle changes it
    let mut sigma: Vec<f64> = Vec::new();

    for _ in 0..config.external_iterations {
        previous.clear();
        for question in &state.questions {
            previous.extend_from_slice(&question.confidences);
        }
        sigma.clear();
        sigma.resize(previous.len(), 0.0);

        // left cycle: confidence <-> expertise
        for _ in 0..config.inner_iterations {
            let mut offset = 0;
            for question in state.questions.iter_mut() {
                let l = question.num_choices;
                let sig = &mut sigma[offset..offset + l];
                sum_vote_scores(question, &state.workers);
                apply_influence(
                    &question.vote_scores,
                    &mut question.confidence_scores,
                    config.binary_influence,
                );
                fill_logistic(&question.confidence_scores, sig);
                rescale(question, sig, every_pass);
                offset += l;
            }
            for (worker, answered) in state.workers.iter_mut().zip(&answers) {
                if answered.is_empty() {
                    continue;
                }
                let total: f64 = answered
                    .iter()
                    .map(|&(q, c)| state.questions[q].confidences[c])
                    .sum();
                worker.set_expertise(total / answered.len() as f64);
            }
        }

        // right cycle: confidence <-> easiness
        for _ in 0..config.inner_iterations {
            let mut offset = 0;
            for question in state.questions.iter_mut() {
                let l = question.num_choices;
                question.easiness_score = pairwise_spread(&question.confidences);
                question.easiness = 1.0 / (1.0 + config.k * (-question.easiness_score).exp());
                rescale(question, &sigma[offset..offset + l], every_pass);
                offset += l;
            }
        }

        let mut change = 0.0;
        let mut offset = 0;
        for question in state.questions.iter_mut() {
            normalize(&mut question.confidences);
            question.easiness_score = pairwise_spread(&question.confidences);
            for (c, old) in question.confidences.iter().zip(&previous[offset..]) {
                change += (c - old).abs();
            }
            offset += question.num_choices;
        }
        let change = if offset == 0 {
            0.0
        } else {
            change / offset as f64
        };
        trace.changes.push(change);
        if change < config.early_stop_tolerance {
            break;
        }
    }
    Ok(trace)
}

// Voter indices must already be checked.
fn sum_vote_scores(question: &mut QuestionState, workers: &[WorkerState]) {
    question.vote_scores.iter_mut().for_each(|s| *s = 0.0);
    for vote in &question.votes {
        question.vote_scores[vote.choice] += workers[vote.worker.0].expertise_score;
    }
}

fn fill_logistic(scores: &[f64], out: &mut [f64]) {
    // An antisymmetric binary pair needs a single exponential.
    if scores.len() == 2 && scores[1] == -scores[0] {
        let t = (-scores[0]).exp();
        out[0] = 1.0 / (1.0 + t);
        out[1] = if t.is_finite() { t / (1.0 + t) } else { 1.0 };
        return;
    }
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = logistic(s);
    }
}

fn rescale(question: &mut QuestionState, sigma: &[f64], normalize_now: bool) {
    let d = question.easiness;
    for (c, &s) in question.confidences.iter_mut().zip(sigma) {
        *c = d * s;
    }
    if normalize_now {
        normalize(&mut question.confidences);
    }
}
