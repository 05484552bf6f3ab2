use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;

use super::{best_match, brute_force_oracle, first_match, AssignmentPlan, McqInstance, StepKind};
use crate::error::{Error, Result};

/// A per-batch MCQ solver.
pub trait McqSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, instance: &McqInstance, rng: &mut dyn RngCore) -> Result<AssignmentPlan>;
}

pub struct FirstMatch;

impl McqSolver for FirstMatch {
    fn name(&self) -> &'static str {
        "fm"
    }

    fn solve(&self, instance: &McqInstance, rng: &mut dyn RngCore) -> Result<AssignmentPlan> {
        Ok(first_match(instance, rng))
    }
}

pub struct BestMatch;

impl McqSolver for BestMatch {
    fn name(&self) -> &'static str {
        "bm"
    }

    fn solve(&self, instance: &McqInstance, rng: &mut dyn RngCore) -> Result<AssignmentPlan> {
        Ok(best_match(instance, rng))
    }
}

/// Exact solver. Workers it cannot place feasibly go to the allowed question
/// with the most room left, flagged as overflow.
pub struct ExhaustiveOracle;

impl McqSolver for ExhaustiveOracle {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn solve(&self, instance: &McqInstance, _rng: &mut dyn RngCore) -> Result<AssignmentPlan> {
        let mut plan = brute_force_oracle(instance)?.plan;
        let matrix = &instance.matrix;
        let loads = instance.loads(&plan);
        let mut room: Vec<f64> = instance.capacity.iter().zip(&loads).map(|(c, l)| c - l).collect();
        for i in 0..matrix.n_workers() {
            let w = matrix.workers()[i];
            if plan.assignments.contains_key(&w) {
                continue;
            }
            let mut best: Option<usize> = None;
            for j in 0..matrix.n_questions() {
                if matrix.is_allowed(i, j) && best.is_none_or(|b| room[j] > room[b]) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                room[j] -= matrix.get(i, j);
                plan.push(w, matrix.questions()[j], StepKind::Overflow);
            }
        }
        Ok(plan)
    }
}

/// Solvers addressable by name.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Arc<dyn McqSolver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut registry = SolverRegistry::empty();
        registry.register(Arc::new(FirstMatch));
        registry.register(Arc::new(BestMatch));
        registry.register(Arc::new(ExhaustiveOracle));
        registry
    }
}

impl SolverRegistry {
    pub fn empty() -> Self {
        SolverRegistry {
            solvers: BTreeMap::new(),
        }
    }

    /// Adds a solver, replacing any previous one with the same name.
    pub fn register(&mut self, solver: Arc<dyn McqSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn McqSolver>> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownAlgorithm(name.to_string(), self.names().join(", ")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }
}
