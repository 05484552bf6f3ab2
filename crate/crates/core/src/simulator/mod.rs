//! Batch-by-batch simulation of a crowdsourcing job.
//!
//! Each batch: return questions that are already done, plan the arriving
//! workers, collect their votes, re-run the estimator over the full vote
//! history and return every question that reached the threshold.

mod policy;
mod population;
mod replay;

pub use policy::{
    majority_vote, policy_by_name, BatchPolicy, FixedRepetition, McqPolicy, PolicyContext,
};
pub use population::{simulate_vote, SyntheticPopulation};
pub use replay::{
    consumed_majority_accuracy, label_majority_accuracy, replay_once, run_replay, Indexed,
};

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentPlan, SolverRegistry};
use crate::error::{Error, Result};
use crate::inference::{
    run_estimation, ConvergenceTrace, EstimationState, EstimatorConfig, QuestionId,
    QuestionStatus, Vote, WorkerId,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of questions.
    pub m: usize,
    /// Choices per question.
    pub l: usize,
    /// Easiness score threshold.
    pub delta: f64,
    /// Batch budget; 0 means unbounded.
    pub b: usize,
    /// Workers arriving per batch.
    pub lambda: f64,
    /// Size of the worker pool arrivals are drawn from; `None` means `m`, or
    /// enough workers for one batch if that is larger.
    pub workers: Option<usize>,
    pub seed: u64,
    pub algorithm: String,
    pub baseline_rep: usize,
    pub runs: usize,
    pub estimator: EstimatorConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            m: 250,
            l: 2,
            delta: 0.3,
            b: 20,
            lambda: 1.0,
            workers: None,
            seed: 0,
            algorithm: "fm".into(),
            baseline_rep: 3,
            runs: 100,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.l < 2 {
            return Err(Error::Config(format!(
                "l must be at least 2, got {}",
                self.l
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if (self.pool_size() as f64) < self.lambda.ceil() {
            return Err(Error::Config(format!(
                "worker pool of {} cannot supply {} arrivals per batch",
                self.pool_size(),
                self.lambda
            )));
        }
        if self.algorithm == "baseline" && self.baseline_rep == 0 {
            return Err(Error::Config("rep must be at least 1".into()));
        }
        self.estimator.validate()
    }

    pub fn pool_size(&self) -> usize {
        self.workers
            .unwrap_or_else(|| self.m.max(self.lambda.ceil() as usize))
    }

    /// Seed of run `r`.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    /// Number of batches after which unreturned questions are force-returned.
    /// An unbounded budget still stops after a generous cap so a stalled
    /// run terminates.
    pub fn batch_cap(&self) -> usize {
        if self.b > 0 {
            return self.b;
        }
        let per_batch = self.lambda.min(1.0);
        ((100 * self.m).max(1000) as f64 / per_batch).ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteOrigin {
    /// Drawn from the synthetic worker model.
    Simulated,
    /// Read from a label dataset.
    Observed,
    /// Missing from the label dataset, drawn from the worker's estimated model.
    Synth,
}

/// Produces the vote of a worker for a question they were assigned.
pub trait VoteSource {
    fn vote(
        &mut self,
        worker: WorkerId,
        question: QuestionId,
        state: &EstimationState,
    ) -> Result<(usize, VoteOrigin)>;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub arrived: usize,
    pub assigned: usize,
    pub opened: usize,
    pub returned: usize,
    pub overflow: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub batch: usize,
    pub worker: WorkerId,
    pub question: QuestionId,
    pub choice: usize,
    pub overflow: bool,
    pub origin: VoteOrigin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: QuestionId,
    /// Batch at whose end the question was returned.
    pub returned_batch: Option<usize>,
    /// Returned because the batch budget ran out.
    pub forced: bool,
    /// Votes collected when it was returned.
    pub repetitions: usize,
    /// Confidences when it was returned.
    pub confidences: Vec<f64>,
    pub answer: usize,
    pub truth: Option<usize>,
    pub correct: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub algorithm: String,
    pub seed: u64,
    pub accuracy: f64,
    /// Batches until every question was returned, or the budget if it ran out.
    pub required_batches: usize,
    pub completed: bool,
    pub total_assignments: usize,
    pub mean_repetitions: f64,
    pub per_batch: Vec<BatchLog>,
    /// One trace per batch; empty when no estimation ran.
    pub convergence_traces: Vec<ConvergenceTrace>,
    pub per_question: Vec<QuestionRecord>,
    pub assignments: Vec<AssignmentRecord>,
}

/// Fraction of questions with a known truth whose answer is correct; 0 when
/// no truth is known.
pub fn accuracy_of(records: &[QuestionRecord]) -> f64 {
    let judged: Vec<bool> = records.iter().filter_map(|r| r.correct).collect();
    if judged.is_empty() {
        return 0.0;
    }
    judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64
}

/// A run in progress.
#[derive(Clone, Debug)]
pub struct SimState {
    pub estimation: EstimationState,
    /// Batches completed so far.
    pub batch: usize,
    pub records: Vec<Option<QuestionRecord>>,
}

impl SimState {
    pub fn new(estimation: EstimationState) -> Self {
        let records = vec![None; estimation.questions.len()];
        SimState {
            estimation,
            batch: 0,
            records,
        }
    }

    pub fn unreturned(&self) -> usize {
        self.records.iter().filter(|r| r.is_none()).count()
    }

    fn return_question(&mut self, j: usize, policy: &dyn BatchPolicy, forced: bool) {
        let question = &mut self.estimation.questions[j];
        question.status = QuestionStatus::Returned;
        let answer = policy.answer(question);
        self.records[j] = Some(QuestionRecord {
            question: question.id,
            returned_batch: Some(self.batch),
            forced,
            repetitions: question.votes.len(),
            confidences: question.confidences.clone(),
            answer,
            truth: question.truth,
            correct: question.truth.map(|t| t == answer),
        });
    }

    fn return_done(&mut self, policy: &dyn BatchPolicy, delta: f64) -> usize {
        let mut count = 0;
        for j in 0..self.records.len() {
            if self.records[j].is_none() && policy.is_done(&self.estimation.questions[j], delta) {
                self.return_question(j, policy, false);
                count += 1;
            }
        }
        count
    }
}

pub struct BatchOutcome {
    pub log: BatchLog,
    pub trace: ConvergenceTrace,
    pub plan: AssignmentPlan,
    pub assignments: Vec<AssignmentRecord>,
}

/// Runs one batch and advances the batch counter.
pub fn run_batch(
    state: &mut SimState,
    arrivals: &[WorkerId],
    policy: &dyn BatchPolicy,
    votes: &mut dyn VoteSource,
    config: &SimConfig,
    rng: &mut dyn RngCore,
) -> Result<BatchOutcome> {
    let mut returned = state.return_done(policy, config.delta);

    let plan = {
        let ctx = PolicyContext {
            state: &state.estimation,
            delta: config.delta,
            binary_influence: config.estimator.binary_influence,
        };
        policy.plan(&ctx, arrivals, rng)?
    };
    for q in &plan.opened {
        state.estimation.questions[q.0].status = QuestionStatus::Open;
    }

    let mut assignments = Vec::with_capacity(plan.assignments.len());
    for step in &plan.steps {
        let (choice, origin) = votes.vote(step.worker, step.question, &state.estimation)?;
        state.estimation.add_vote(Vote {
            worker: step.worker,
            question: step.question,
            choice,
        })?;
        assignments.push(AssignmentRecord {
            batch: state.batch,
            worker: step.worker,
            question: step.question,
            choice,
            overflow: plan.overflow.contains(&step.question),
            origin,
        });
    }

    let trace = if policy.uses_estimation() && !assignments.is_empty() {
        run_estimation(&mut state.estimation, &config.estimator)?
    } else {
        ConvergenceTrace::default()
    };

    returned += state.return_done(policy, config.delta);
    for question in &mut state.estimation.questions {
        if question.status == QuestionStatus::Open {
            question.status = QuestionStatus::Closed;
        }
    }

    let log = BatchLog {
        batch: state.batch,
        arrived: arrivals.len(),
        assigned: assignments.len(),
        opened: plan.num_opened(),
        returned,
        overflow: plan.overflow.len(),
    };
    state.batch += 1;
    Ok(BatchOutcome {
        log,
        trace,
        plan,
        assignments,
    })
}

/// Runs batches until every question is returned or `cap` batches have
/// elapsed, then force-returns whatever is left.
pub fn run_to_completion(
    mut state: SimState,
    policy: &dyn BatchPolicy,
    config: &SimConfig,
    cap: usize,
    arrivals: &mut dyn FnMut(usize) -> Vec<WorkerId>,
    votes: &mut dyn VoteSource,
    rng: &mut dyn RngCore,
    seed: u64,
) -> Result<SimReport> {
    let mut per_batch = Vec::new();
    let mut convergence_traces = Vec::new();
    let mut all_assignments = Vec::new();

    while state.unreturned() > 0 && state.batch < cap {
        let workers = arrivals(state.batch);
        let outcome = run_batch(&mut state, &workers, policy, votes, config, rng)?;
        per_batch.push(outcome.log);
        convergence_traces.push(outcome.trace);
        all_assignments.extend(outcome.assignments);
    }

    let completed = state.unreturned() == 0;
    let required_batches = if completed { state.batch } else { cap };
    if !completed {
        log::debug!(
            "budget of {cap} batches exhausted with {} questions open",
            state.unreturned()
        );
        for j in 0..state.records.len() {
            if state.records[j].is_none() {
                state.return_question(j, policy, true);
            }
        }
    }

    let per_question: Vec<QuestionRecord> = state.records.into_iter().flatten().collect();
    let mean_repetitions = if per_question.is_empty() {
        0.0
    } else {
        per_question.iter().map(|r| r.repetitions).sum::<usize>() as f64
            / per_question.len() as f64
    };
    Ok(SimReport {
        algorithm: policy.name().to_string(),
        seed,
        accuracy: accuracy_of(&per_question),
        required_batches,
        completed,
        total_assignments: all_assignments.len(),
        mean_repetitions,
        per_batch,
        convergence_traces,
        per_question,
        assignments: all_assignments,
    })
}

// Independent random streams of one run, so that runs with the same seed
// see the same population and arrivals whatever the algorithm.
pub(crate) const POPULATION_STREAM: u64 = 0;
pub(crate) const ARRIVAL_STREAM: u64 = 1;
pub(crate) const VOTE_STREAM: u64 = 2;
pub(crate) const ASSIGNMENT_STREAM: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_population(config: &SimConfig, seed: u64) -> SyntheticPopulation {
    SyntheticPopulation::generate(
        config.m,
        config.l,
        config.pool_size(),
        &mut stream_rng(seed, POPULATION_STREAM),
    )
}

/// Distinct pool members arriving in one batch: ⌊λ⌋ plus one more with
/// probability frac(λ).
pub fn draw_arrivals<R: Rng + ?Sized>(lambda: f64, pool: usize, rng: &mut R) -> Vec<WorkerId> {
    let mut count = lambda.floor() as usize;
    let frac = lambda - lambda.floor();
    if frac > 0.0 && rng.random::<f64>() < frac {
        count += 1;
    }
    index::sample(rng, pool, count.min(pool))
        .into_iter()
        .map(WorkerId)
        .collect()
}

struct SyntheticVotes<'a> {
    population: &'a SyntheticPopulation,
    num_choices: usize,
    rng: ChaCha8Rng,
}

impl VoteSource for SyntheticVotes<'_> {
    fn vote(
        &mut self,
        worker: WorkerId,
        question: QuestionId,
        _state: &EstimationState,
    ) -> Result<(usize, VoteOrigin)> {
        let p = self.population;
        let choice = simulate_vote(
            p.worker_expertise[worker.0],
            p.question_easiness[question.0],
            p.truths[question.0],
            self.num_choices,
            &mut self.rng,
        );
        Ok((choice, VoteOrigin::Simulated))
    }
}

/// One synthetic run with the given seed.
pub fn run_single(config: &SimConfig, seed: u64) -> Result<SimReport> {
    config.validate()?;
    let policy = policy_by_name(&config.algorithm, config.baseline_rep, &SolverRegistry::default())?;
    let population = generate_population(config, seed);

    let mut estimation = EstimationState::new(config.m, config.l, config.pool_size())?;
    for (question, &truth) in estimation.questions.iter_mut().zip(&population.truths) {
        question.truth = Some(truth);
    }

    let mut arrival_rng = stream_rng(seed, ARRIVAL_STREAM);
    let mut arrivals = |_batch: usize| draw_arrivals(config.lambda, config.pool_size(), &mut arrival_rng);
    let mut votes = SyntheticVotes {
        population: &population,
        num_choices: config.l,
        rng: stream_rng(seed, VOTE_STREAM),
    };
    let mut assignment_rng = stream_rng(seed, ASSIGNMENT_STREAM);
    run_to_completion(
        SimState::new(estimation),
        policy.as_ref(),
        config,
        config.batch_cap(),
        &mut arrivals,
        &mut votes,
        &mut assignment_rng,
        seed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub required_batches: usize,
    pub completed: bool,
    pub total_assignments: usize,
    pub mean_repetitions: f64,
}

impl RunSummary {
    pub fn of(run: usize, report: &SimReport) -> Self {
        RunSummary {
            run,
            seed: report.seed,
            accuracy: report.accuracy,
            required_batches: report.required_batches,
            completed: report.completed,
            total_assignments: report.total_assignments,
            mean_repetitions: report.mean_repetitions,
        }
    }
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len();
        if n == 0 {
            return Estimate::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, std_err }
    }
}

/// Results of `runs` independent runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: SimConfig,
    pub accuracy: Estimate,
    pub required_batches: Estimate,
    pub repetitions: Estimate,
    pub total_assignments: Estimate,
    pub completed_runs: usize,
    pub runs: Vec<RunSummary>,
    /// Full detail of the first run.
    pub detail: SimReport,
}

impl AggregateReport {
    pub fn from_runs(config: &SimConfig, reports: Vec<SimReport>) -> Self {
        let runs: Vec<RunSummary> = reports
            .iter()
            .enumerate()
            .map(|(r, report)| RunSummary::of(r, report))
            .collect();
        AggregateReport {
            config: config.clone(),
            accuracy: Estimate::of(runs.iter().map(|r| r.accuracy)),
            required_batches: Estimate::of(runs.iter().map(|r| r.required_batches as f64)),
            repetitions: Estimate::of(runs.iter().map(|r| r.mean_repetitions)),
            total_assignments: Estimate::of(runs.iter().map(|r| r.total_assignments as f64)),
            completed_runs: runs.iter().filter(|r| r.completed).count(),
            runs,
            detail: reports.into_iter().next().expect("at least one run"),
        }
    }
}

/// `config.runs` runs with seeds `seed, seed + 1, ...`, in parallel, combined
/// in seed order.
pub fn run_simulation(config: &SimConfig) -> Result<AggregateReport> {
    config.validate()?;
    let reports = (0..config.runs)
        .into_par_iter()
        .map(|r| run_single(config, config.run_seed(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport::from_runs(config, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::QuestionState;

    fn small(algorithm: &str) -> SimConfig {
        SimConfig {
            m: 20,
            b: 0,
            runs: 2,
            workers: Some(30),
            algorithm: algorithm.into(),
            ..SimConfig::default()
        }
    }

    struct Fixed(usize);

    impl VoteSource for Fixed {
        fn vote(&mut self, _: WorkerId, _: QuestionId, _: &EstimationState) -> Result<(usize, VoteOrigin)> {
            Ok((self.0, VoteOrigin::Simulated))
        }
    }

    #[test]
    fn validation() {
        assert!(SimConfig::default().validate().is_ok());
        for bad in [
            SimConfig { delta: 1.5, ..SimConfig::default() },
            SimConfig { delta: 0.0, ..SimConfig::default() },
            SimConfig { m: 0, ..SimConfig::default() },
            SimConfig { lambda: 0.0, ..SimConfig::default() },
            SimConfig { runs: 0, ..SimConfig::default() },
            SimConfig { lambda: 31.0, ..small("fm") },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
        let err = SimConfig { delta: 1.5, ..SimConfig::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn arrivals_follow_lambda() {
        let mut rng = stream_rng(3, ARRIVAL_STREAM);
        assert!((0..50).all(|_| draw_arrivals(3.0, 10, &mut rng).len() == 3));
        let total: usize = (0..10_000).map(|_| draw_arrivals(0.25, 10, &mut rng).len()).sum();
        assert!((total as f64 / 10_000.0 - 0.25).abs() < 0.02);
        let batch = draw_arrivals(5.0, 5, &mut rng);
        let mut ids: Vec<usize> = batch.iter().map(|w| w.0).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_batch_only_advances_the_counter() {
        let config = small("fm");
        let mut state = SimState::new(EstimationState::new(3, 2, 5).unwrap());
        state.estimation.questions[1].votes.clear();
        let before = state.estimation.clone();
        let policy = policy_by_name("fm", 3, &SolverRegistry::default()).unwrap();
        let outcome = run_batch(
            &mut state,
            &[],
            policy.as_ref(),
            &mut Fixed(0),
            &config,
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert_eq!(state.batch, 1);
        assert_eq!(state.estimation, before);
        assert_eq!(outcome.log.returned, 0);
        assert!(outcome.trace.is_empty());
    }

    #[test]
    fn finished_question_is_returned_before_assignment() {
        let config = small("fm");
        let mut state = SimState::new(EstimationState::new(2, 2, 1).unwrap());
        state.estimation.questions[0].easiness_score = 0.9;
        let policy = policy_by_name("fm", 3, &SolverRegistry::default()).unwrap();
        let outcome = run_batch(
            &mut state,
            &[WorkerId(0)],
            policy.as_ref(),
            &mut Fixed(0),
            &config,
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert!(outcome.assignments.iter().all(|a| a.question == QuestionId(1)));
        let record = state.records[0].as_ref().unwrap();
        assert_eq!(record.returned_batch, Some(0));
        assert_eq!(record.repetitions, 0);
    }

    #[test]
    fn baseline_rep_one_answers_each_question_once() {
        let m = 6;
        let config = SimConfig {
            m,
            b: 0,
            algorithm: "baseline".into(),
            baseline_rep: 1,
            ..SimConfig::default()
        };
        let policy = policy_by_name("baseline", 1, &SolverRegistry::default()).unwrap();
        let workers: Vec<WorkerId> = (0..m).map(WorkerId).collect();
        let mut arrivals = |_| workers.clone();
        let report = run_to_completion(
            SimState::new(EstimationState::new(m, 2, m).unwrap()),
            policy.as_ref(),
            &config,
            10,
            &mut arrivals,
            &mut Fixed(1),
            &mut stream_rng(0, 0),
            0,
        )
        .unwrap();
        assert_eq!(report.required_batches, 1);
        assert_eq!(report.total_assignments, m);
        assert!(report.per_question.iter().all(|r| r.repetitions == 1 && r.answer == 1));
    }

    #[test]
    fn baseline_with_perfect_voters_is_always_right() {
        let m = 10;
        let config = SimConfig {
            m,
            b: 0,
            algorithm: "baseline".into(),
            ..SimConfig::default()
        };
        let policy = policy_by_name("baseline", 3, &SolverRegistry::default()).unwrap();
        let mut estimation = EstimationState::new(m, 2, 5).unwrap();
        for q in &mut estimation.questions {
            q.truth = Some(1);
        }
        let mut rng = stream_rng(1, ARRIVAL_STREAM);
        let mut arrivals = |_| draw_arrivals(2.0, 5, &mut rng);
        let report = run_to_completion(
            SimState::new(estimation),
            policy.as_ref(),
            &config,
            1000,
            &mut arrivals,
            &mut Fixed(1),
            &mut stream_rng(0, 0),
            0,
        )
        .unwrap();
        assert!(report.completed);
        assert_eq!(report.accuracy, 1.0);
        assert!(report.per_question.iter().all(|r| r.repetitions == 3));
    }

    #[test]
    fn budget_exhaustion_forces_returns() {
        let config = SimConfig { b: 3, ..small("bm") };
        let report = run_single(&config, 9).unwrap();
        assert!(!report.completed);
        assert_eq!(report.required_batches, 3);
        assert_eq!(report.per_batch.len(), 3);
        assert_eq!(report.per_question.len(), config.m);
        assert!(report.per_question.iter().any(|r| r.forced));
    }

    #[test]
    fn single_question_many_workers_finishes_fast() {
        let config = SimConfig {
            m: 1,
            lambda: 10.0,
            delta: 0.2,
            b: 0,
            ..SimConfig::default()
        };
        // a split vote from the whole pool can leave the question stuck
        let quick = (0..20)
            .filter(|&seed| run_single(&config, seed).unwrap().required_batches <= 2)
            .count();
        assert!(quick >= 15, "{quick} of 20 runs done within 2 batches");
    }

    #[test]
    fn runs_are_reproducible_and_conserve_questions() {
        for algorithm in ["fm", "bm", "oracle", "baseline"] {
            let config = small(algorithm);
            let a = run_single(&config, 5).unwrap();
            let b = run_single(&config, 5).unwrap();
            assert_eq!(a, b, "{algorithm}");
            assert!(a.completed, "{algorithm}");
            let mut seen: Vec<QuestionId> = a.per_question.iter().map(|r| r.question).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), config.m);
            let returned: usize = a.per_batch.iter().map(|l| l.returned).sum();
            assert_eq!(returned, config.m);
            assert_eq!(a.accuracy, accuracy_of(&a.per_question));
        }
    }

    #[test]
    fn returned_questions_are_never_assigned_again() {
        let report = run_single(&small("bm"), 11).unwrap();
        for a in &report.assignments {
            let record = report.per_question.iter().find(|r| r.question == a.question).unwrap();
            assert!(a.batch <= record.returned_batch.unwrap());
        }
    }

    #[test]
    fn same_seed_gives_same_population_for_every_algorithm() {
        let fm = generate_population(&small("fm"), 3);
        let bm = generate_population(&small("bm"), 3);
        assert_eq!(fm, bm);
    }

    #[test]
    fn aggregate_matches_runs() {
        let config = small("fm");
        let aggregate = run_simulation(&config).unwrap();
        assert_eq!(aggregate.runs.len(), 2);
        let direct = run_single(&config, config.run_seed(1)).unwrap();
        assert_eq!(aggregate.runs[1].accuracy, direct.accuracy);
        let mean = (aggregate.runs[0].accuracy + aggregate.runs[1].accuracy) / 2.0;
        assert!((aggregate.accuracy.mean - mean).abs() < 1e-12);
    }

    #[test]
    fn accuracy_ignores_questions_without_truth() {
        let q = QuestionState::new(QuestionId(0), 2).unwrap();
        let record = |correct: Option<bool>| QuestionRecord {
            question: q.id,
            returned_batch: Some(0),
            forced: false,
            repetitions: 0,
            confidences: q.confidences.clone(),
            answer: 0,
            truth: correct.map(|c| if c { 0 } else { 1 }),
            correct,
        };
        assert_eq!(accuracy_of(&[record(Some(true)), record(None), record(Some(false))]), 0.5);
        assert_eq!(accuracy_of(&[record(None)]), 0.0);
    }
}
