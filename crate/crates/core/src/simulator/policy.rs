//! Batch policies: how arriving workers are matched to questions, when a
//! question is done, and which answer it returns.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;

use crate::assignment::{
    build_instance, remaining_scores, AssignmentPlan, McqSolver, SolverRegistry, StepKind,
};
use crate::error::{Error, Result};
use crate::inference::{EstimationState, QuestionId, QuestionState, QuestionStatus, WorkerId};

/// What a policy may look at when planning a batch.
pub struct PolicyContext<'a> {
    pub state: &'a EstimationState,
    pub delta: f64,
    pub binary_influence: bool,
}

pub trait BatchPolicy: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the estimator runs at the end of each batch.
    fn uses_estimation(&self) -> bool {
        true
    }

    fn plan(
        &self,
        ctx: &PolicyContext<'_>,
        arrivals: &[WorkerId],
        rng: &mut dyn RngCore,
    ) -> Result<AssignmentPlan>;

    /// Whether an unreturned question should be returned now.
    fn is_done(&self, question: &QuestionState, delta: f64) -> bool;

    fn answer(&self, question: &QuestionState) -> usize;
}

/// Wraps an MCQ solver: assignable questions are those with δ − sc.d > 0,
/// and a question returns once sc.d reaches δ.
pub struct McqPolicy {
    solver: Arc<dyn McqSolver>,
}

impl McqPolicy {
    pub fn new(solver: Arc<dyn McqSolver>) -> Self {
        McqPolicy { solver }
    }
}

impl BatchPolicy for McqPolicy {
    fn name(&self) -> &str {
        self.solver.name()
    }

    fn plan(
        &self,
        ctx: &PolicyContext<'_>,
        arrivals: &[WorkerId],
        rng: &mut dyn RngCore,
    ) -> Result<AssignmentPlan> {
        let pool = ctx
            .state
            .questions
            .iter()
            .filter(|q| q.status != QuestionStatus::Returned);
        let scores = remaining_scores(pool, ctx.delta);
        let assignable: Vec<(QuestionId, f64)> = scores.assignable().collect();
        let instance = build_instance(ctx.state, arrivals, &assignable, ctx.binary_influence)?;
        self.solver.solve(&instance, rng)
    }

    fn is_done(&self, question: &QuestionState, delta: f64) -> bool {
        question.easiness_score >= delta
    }

    fn answer(&self, question: &QuestionState) -> usize {
        question.inferred_truth()
    }
}

/// Fixed-repetition baseline: every question gets exactly `rep` votes and
/// returns the majority choice.
pub struct FixedRepetition {
    pub rep: usize,
}

impl BatchPolicy for FixedRepetition {
    fn name(&self) -> &str {
        "baseline"
    }

    fn uses_estimation(&self) -> bool {
        false
    }

    fn plan(
        &self,
        ctx: &PolicyContext<'_>,
        arrivals: &[WorkerId],
        _rng: &mut dyn RngCore,
    ) -> Result<AssignmentPlan> {
        let mut left: BTreeMap<QuestionId, usize> = ctx
            .state
            .questions
            .iter()
            .filter(|q| q.status != QuestionStatus::Returned)
            .map(|q| (q.id, self.rep.saturating_sub(q.votes.len())))
            .filter(|&(_, r)| r > 0)
            .collect();
        let mut plan = AssignmentPlan::default();
        for &w in arrivals {
            if plan.assignments.contains_key(&w) {
                continue;
            }
            let worker = ctx.state.workers.get(w.0).ok_or(Error::UnknownWorker(w))?;
            // BTreeMap order makes the strict comparison keep the lowest id.
            let mut best: Option<(QuestionId, usize)> = None;
            for (&q, &r) in &left {
                if r > 0 && !worker.has_answered(q) && best.is_none_or(|(_, br)| r > br) {
                    best = Some((q, r));
                }
            }
            if let Some((q, _)) = best {
                *left.get_mut(&q).expect("candidate is tracked") -= 1;
                let kind = if plan.opened.contains(&q) {
                    StepKind::Join
                } else {
                    StepKind::Open
                };
                plan.push(w, q, kind);
            }
        }
        Ok(plan)
    }

    fn is_done(&self, question: &QuestionState, _delta: f64) -> bool {
        question.votes.len() >= self.rep
    }

    fn answer(&self, question: &QuestionState) -> usize {
        majority_vote(question)
    }
}

/// Most voted choice, ties to the lowest index. A question without votes
/// returns choice 0.
pub fn majority_vote(question: &QuestionState) -> usize {
    let mut counts = vec![0usize; question.num_choices];
    for vote in &question.votes {
        counts[vote.choice] += 1;
    }
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

/// Looks up a policy by algorithm name: any registered solver, or `baseline`.
pub fn policy_by_name(
    name: &str,
    baseline_rep: usize,
    solvers: &SolverRegistry,
) -> Result<Box<dyn BatchPolicy>> {
    if name == "baseline" {
        if baseline_rep == 0 {
            return Err(Error::Config("baseline repetitions must be at least 1".into()));
        }
        return Ok(Box::new(FixedRepetition { rep: baseline_rep }));
    }
    match solvers.get(name) {
        Ok(solver) => Ok(Box::new(McqPolicy::new(solver))),
        Err(_) => {
            let mut known = solvers.names();
            known.push("baseline");
            Err(Error::UnknownAlgorithm(name.to_string(), known.join(", ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Vote;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(state: &EstimationState) -> PolicyContext<'_> {
        PolicyContext {
            state,
            delta: 0.3,
            binary_influence: true,
        }
    }

    #[test]
    fn baseline_spreads_over_most_remaining() {
        let mut state = EstimationState::new(3, 2, 4).unwrap();
        state
            .add_vote(Vote {
                worker: WorkerId(3),
                question: QuestionId(0),
                choice: 0,
            })
            .unwrap();
        let policy = FixedRepetition { rep: 2 };
        let arrivals = [WorkerId(0), WorkerId(1), WorkerId(2)];
        let plan = policy
            .plan(&ctx(&state), &arrivals, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        // q1 and q2 have 2 left, q0 has 1
        assert_eq!(plan.assignments[&WorkerId(0)], QuestionId(1));
        assert_eq!(plan.assignments[&WorkerId(1)], QuestionId(2));
        assert_eq!(plan.assignments[&WorkerId(2)], QuestionId(0));
    }

    #[test]
    fn baseline_skips_answered_and_exhausted() {
        let mut state = EstimationState::new(1, 2, 3).unwrap();
        state
            .add_vote(Vote {
                worker: WorkerId(0),
                question: QuestionId(0),
                choice: 1,
            })
            .unwrap();
        let policy = FixedRepetition { rep: 2 };
        let plan = policy
            .plan(
                &ctx(&state),
                &[WorkerId(0), WorkerId(1), WorkerId(2)],
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
        assert_eq!(plan.assignments.len(), 1);
        assert_eq!(plan.assignments[&WorkerId(1)], QuestionId(0));
    }

    #[test]
    fn majority_ties_go_low() {
        let mut q = QuestionState::new(QuestionId(0), 3).unwrap();
        for (w, c) in [(0, 2), (1, 1), (2, 1), (3, 2)] {
            q.votes.push(Vote {
                worker: WorkerId(w),
                question: QuestionId(0),
                choice: c,
            });
        }
        assert_eq!(majority_vote(&q), 1);
        assert_eq!(majority_vote(&QuestionState::new(QuestionId(1), 2).unwrap()), 0);
    }

    #[test]
    fn mcq_policy_excludes_returnable_questions() {
        let mut state = EstimationState::new(2, 2, 1).unwrap();
        state.questions[0].easiness_score = 0.5;
        let policy = policy_by_name("fm", 3, &SolverRegistry::default()).unwrap();
        let plan = policy
            .plan(&ctx(&state), &[WorkerId(0)], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(plan.assignments[&WorkerId(0)], QuestionId(1));
    }

    #[test]
    fn names_resolve() {
        let solvers = SolverRegistry::default();
        for name in ["fm", "bm", "oracle", "baseline"] {
            assert_eq!(policy_by_name(name, 3, &solvers).unwrap().name(), name);
        }
        assert!(matches!(
            policy_by_name("qasca", 3, &solvers),
            Err(Error::UnknownAlgorithm(..))
        ));
        assert!(matches!(
            policy_by_name("baseline", 0, &solvers),
            Err(Error::Config(_))
        ));
    }
}
