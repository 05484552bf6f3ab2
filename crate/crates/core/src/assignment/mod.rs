//! Per-batch assignment: expected easiness-score increase (E²I) of each
//! worker on each question, and solvers that pack the batch's workers into as
//! few questions as possible without overusing any question's remaining
//! easiness score.

mod analysis;
mod greedy;
mod oracle;
mod registry;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    apply_influence, logistic, normalize, EstimationState, QuestionId, QuestionState, WorkerId,
    WorkerState,
};

pub use analysis::{classify_experts, groups_in_open_order, helper_procedure, Classification};
pub use greedy::{best_match, first_match};
pub use oracle::{brute_force_oracle, OracleOutcome, ORACLE_LIMIT};
pub use registry::{BestMatch, ExhaustiveOracle, FirstMatch, McqSolver, SolverRegistry};

/// Probability that a worker with expertise `e` picks the truth of a question
/// with easiness `d`.
pub fn selection_probability(e: f64, d: f64) -> f64 {
    logistic(e * d)
}

/// P(worker votes a_k | question) for every choice k, marginalizing the
/// unknown truth over the question's answer confidences.
pub fn answer_probability(worker: &WorkerState, question: &QuestionState) -> Vec<f64> {
    let p = selection_probability(worker.expertise, question.easiness);
    answer_distribution(p, &question.confidences)
}

pub(crate) fn answer_distribution(p: f64, confidences: &[f64]) -> Vec<f64> {
    let l = confidences.len();
    let wrong = (1.0 - p) / (l - 1) as f64;
    (0..l)
        .map(|k| {
            confidences
                .iter()
                .enumerate()
                .map(|(r, &c)| if r == k { p * c } else { wrong * c })
                .sum()
        })
        .collect()
}

/// sc.d after adding `extra` to the raw vote score of `choice`, recomputed
/// through influence, logistic and normalization.
fn spread_with_extra_vote(
    question: &QuestionState,
    choice: Option<usize>,
    extra: f64,
    binary_influence: bool,
) -> f64 {
    let l = question.num_choices;
    let mut raw = question.vote_scores.clone();
    if let Some(k) = choice {
        raw[k] += extra;
    }
    let mut adjusted = vec![0.0; l];
    apply_influence(&raw, &mut adjusted, binary_influence);
    let mut c: Vec<f64> = adjusted
        .iter()
        .map(|&s| question.easiness * logistic(s))
        .collect();
    normalize(&mut c);
    let mut total = 0.0;
    for i in 0..l {
        for j in (i + 1)..l {
            total += (c[i] - c[j]).abs();
        }
    }
    total / (l * (l - 1) / 2) as f64
}

/// Σ_k P(a_k) · EI(a_k), before taking the absolute value.
pub fn expected_increase_signed(
    worker: &WorkerState,
    question: &QuestionState,
    binary_influence: bool,
) -> Result<f64> {
    if worker.has_answered(question.id) {
        return Err(Error::AlreadyAnswered {
            worker: worker.id,
            question: question.id,
        });
    }
    if worker.expertise_score == 0.0 {
        return Ok(0.0);
    }
    let base = spread_with_extra_vote(question, None, 0.0, binary_influence);
    let probs = answer_probability(worker, question);
    let mut total = 0.0;
    for (k, p) in probs.iter().enumerate() {
        let after = spread_with_extra_vote(question, Some(k), worker.expertise_score, binary_influence);
        total += p * (after - base);
    }
    Ok(total)
}

/// E²I(w|q) = |Σ_k P(A(w) = a_k | q) · EI(A(w) = a_k | q)|.
pub fn expected_increase(
    worker: &WorkerState,
    question: &QuestionState,
    binary_influence: bool,
) -> Result<f64> {
    expected_increase_signed(worker, question, binary_influence).map(f64::abs)
}

/// c_j = δ - sc.d(q_j) for every question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainingScores {
    pub delta: f64,
    pub entries: Vec<(QuestionId, f64)>,
}

impl RemainingScores {
    /// Questions with c_j > 0, i.e. still below the threshold.
    pub fn assignable(&self) -> impl Iterator<Item = (QuestionId, f64)> + '_ {
        self.entries.iter().copied().filter(|&(_, c)| c > 0.0)
    }

    /// Questions already at or over the threshold.
    pub fn returnable(&self) -> impl Iterator<Item = QuestionId> + '_ {
        self.entries
            .iter()
            .filter(|&&(_, c)| c <= 0.0)
            .map(|&(q, _)| q)
    }
}

pub fn remaining_scores<'a>(
    questions: impl IntoIterator<Item = &'a QuestionState>,
    delta: f64,
) -> RemainingScores {
    RemainingScores {
        delta,
        entries: questions
            .into_iter()
            .map(|q| (q.id, delta - q.easiness_score))
            .collect(),
    }
}

/// Worker × question table of E²I values. Cells a worker may not take (they
/// already answered that question) are masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct E2IMatrix {
    workers: Vec<WorkerId>,
    questions: Vec<QuestionId>,
    values: Vec<f64>,
    allowed: Vec<bool>,
    worker_index: HashMap<WorkerId, usize>,
    question_index: HashMap<QuestionId, usize>,
}

impl E2IMatrix {
    pub fn new(workers: Vec<WorkerId>, questions: Vec<QuestionId>) -> Self {
        let cells = workers.len() * questions.len();
        let worker_index = workers.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        let question_index = questions.iter().enumerate().map(|(j, &q)| (q, j)).collect();
        E2IMatrix {
            workers,
            questions,
            values: vec![0.0; cells],
            allowed: vec![true; cells],
            worker_index,
            question_index,
        }
    }

    /// Unmasked matrix from literal rows, worker i and question j numbered
    /// from zero.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut matrix = E2IMatrix::new(
            (0..n).map(WorkerId).collect(),
            (0..m).map(QuestionId).collect(),
        );
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), m, "ragged E2I rows");
            for (j, &v) in row.iter().enumerate() {
                matrix.set(i, j, v);
            }
        }
        matrix
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn workers(&self) -> &[WorkerId] {
        &self.workers
    }

    pub fn questions(&self) -> &[QuestionId] {
        &self.questions
    }

    pub fn worker_index(&self, worker: WorkerId) -> Option<usize> {
        self.worker_index.get(&worker).copied()
    }

    pub fn question_index(&self, question: QuestionId) -> Option<usize> {
        self.question_index.get(&question).copied()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.questions.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(value >= 0.0, "E2I entries are absolute values");
        let m = self.questions.len();
        self.values[i * m + j] = value;
    }

    #[inline]
    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.questions.len() + j]
    }

    pub fn mask(&mut self, i: usize, j: usize) {
        let m = self.questions.len();
        self.allowed[i * m + j] = false;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.questions.len();
        &self.values[i * m..(i + 1) * m]
    }
}

/// One MCQ instance: the E²I table plus the remaining easiness score of every
/// column.
#[derive(Clone, Debug, PartialEq)]
pub struct McqInstance {
    pub matrix: E2IMatrix,
    pub capacity: Vec<f64>,
}

impl McqInstance {
    pub fn new(matrix: E2IMatrix, capacity: Vec<f64>) -> Self {
        assert_eq!(matrix.n_questions(), capacity.len());
        McqInstance { matrix, capacity }
    }

    pub fn from_rows(rows: &[Vec<f64>], capacity: &[f64]) -> Self {
        let matrix = E2IMatrix::from_rows(rows);
        if rows.is_empty() {
            let matrix = E2IMatrix::new(Vec::new(), (0..capacity.len()).map(QuestionId).collect());
            return McqInstance::new(matrix, capacity.to_vec());
        }
        McqInstance::new(matrix, capacity.to_vec())
    }

    pub fn n_workers(&self) -> usize {
        self.matrix.n_workers()
    }

    pub fn n_questions(&self) -> usize {
        self.matrix.n_questions()
    }

    /// Total E²I assigned to every column under `plan`.
    pub fn loads(&self, plan: &AssignmentPlan) -> Vec<f64> {
        let mut loads = vec![0.0; self.n_questions()];
        for (&w, &q) in &plan.assignments {
            let i = self.matrix.worker_index(w).expect("plan worker in instance");
            let j = self.matrix.question_index(q).expect("plan question in instance");
            loads[j] += self.matrix.get(i, j);
        }
        loads
    }

    /// Opened questions whose load exceeds capacity (beyond `tolerance`) and
    /// that are not flagged as overflow.
    pub fn unflagged_violations(&self, plan: &AssignmentPlan, tolerance: f64) -> Vec<QuestionId> {
        let loads = self.loads(plan);
        plan.opened
            .iter()
            .copied()
            .filter(|q| !plan.overflow.contains(q))
            .filter(|&q| {
                let j = self.matrix.question_index(q).expect("opened question in instance");
                loads[j] > self.capacity[j] + tolerance
            })
            .collect()
    }
}

/// Builds the E²I table for `workers` × `questions` from estimation state,
/// masking every question a worker already answered.
pub fn build_instance(
    state: &EstimationState,
    workers: &[WorkerId],
    questions: &[(QuestionId, f64)],
    binary_influence: bool,
) -> Result<McqInstance> {
    let mut matrix = E2IMatrix::new(
        workers.to_vec(),
        questions.iter().map(|&(q, _)| q).collect(),
    );
    for (i, &w) in workers.iter().enumerate() {
        let worker = state.workers.get(w.0).ok_or(Error::UnknownWorker(w))?;
        for (j, &(q, _)) in questions.iter().enumerate() {
            let question = state.questions.get(q.0).ok_or(Error::UnknownQuestion(q))?;
            if worker.has_answered(q) {
                matrix.mask(i, j);
                continue;
            }
            matrix.set(i, j, expected_increase(worker, question, binary_influence)?);
        }
    }
    let capacity = questions.iter().map(|&(_, c)| c).collect();
    Ok(McqInstance::new(matrix, capacity))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    /// First assignment, at the global minimum remaining score.
    Seed,
    /// Joined an already open question.
    Join,
    /// Opened a closed question.
    Open,
    /// Fit nowhere; placed on the question with the largest remaining score.
    Overflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub worker: WorkerId,
    pub question: QuestionId,
    pub kind: StepKind,
}

/// Assignment of one batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub assignments: BTreeMap<WorkerId, QuestionId>,
    /// Q_T in opening order.
    pub opened: Vec<QuestionId>,
    /// Questions whose budget was knowingly exceeded by the fallback.
    pub overflow: BTreeSet<QuestionId>,
    /// Decisions in the order they were made.
    #[serde(skip)]
    pub steps: Vec<PlanStep>,
}

impl AssignmentPlan {
    pub fn num_opened(&self) -> usize {
        self.opened.len()
    }

    pub fn workers_on(&self, question: QuestionId) -> Vec<WorkerId> {
        self.assignments
            .iter()
            .filter(|&(_, &q)| q == question)
            .map(|(&w, _)| w)
            .collect()
    }

    pub(crate) fn push(&mut self, worker: WorkerId, question: QuestionId, kind: StepKind) {
        let previous = self.assignments.insert(worker, question);
        debug_assert!(previous.is_none(), "worker assigned twice");
        if !self.opened.contains(&question) {
            self.opened.push(question);
        }
        if kind == StepKind::Overflow {
            self.overflow.insert(question);
        }
        self.steps.push(PlanStep {
            worker,
            question,
            kind,
        });
    }
}
