//! Exact MCQ solver by exhaustive search, for test-scale instances.

use super::{AssignmentPlan, McqInstance, StepKind};
use crate::error::{Error, Result};

/// Upper bound on `(m + 1)^n`, the number of leaves of the search tree.
pub const ORACLE_LIMIT: f64 = 5e7;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    /// |Q*_T|: fewest opened questions over the best placements found.
    pub min_questions: usize,
    /// Whether every worker could be placed feasibly.
    pub total: bool,
    /// Workers placed by `plan`.
    pub placed: usize,
    pub plan: AssignmentPlan,
}

struct Search<'a> {
    instance: &'a McqInstance,
    allow_idle: bool,
    load: Vec<f64>,
    users: Vec<usize>,
    current: Vec<Option<usize>>,
    distinct: usize,
    placed: usize,
    best: Option<(usize, usize, Vec<Option<usize>>)>,
}

impl Search<'_> {
    fn better(&self, placed: usize, distinct: usize) -> bool {
        match &self.best {
            None => true,
            Some((bp, bd, _)) => placed > *bp || (placed == *bp && distinct < *bd),
        }
    }

    fn visit(&mut self, i: usize) {
        let n = self.instance.n_workers();
        if i == n {
            if self.better(self.placed, self.distinct) {
                self.best = Some((self.placed, self.distinct, self.current.clone()));
            }
            return;
        }
        // Bound: even placing every remaining worker cannot beat the best.
        if let Some((bp, bd, _)) = &self.best {
            let reachable = self.placed + (n - i);
            if reachable < *bp || (reachable == *bp && self.distinct >= *bd) {
                return;
            }
        }
        let matrix = &self.instance.matrix;
        for j in 0..self.instance.n_questions() {
            if !matrix.is_allowed(i, j) {
                continue;
            }
            let e = matrix.get(i, j);
            if self.instance.capacity[j] - self.load[j] - e < 0.0 {
                continue;
            }
            let saved = self.load[j];
            self.load[j] += e;
            self.users[j] += 1;
            if self.users[j] == 1 {
                self.distinct += 1;
            }
            self.placed += 1;
            self.current[i] = Some(j);
            self.visit(i + 1);
            self.current[i] = None;
            self.placed -= 1;
            if self.users[j] == 1 {
                self.distinct -= 1;
            }
            self.users[j] -= 1;
            self.load[j] = saved;
        }
        if self.allow_idle {
            self.visit(i + 1);
        }
    }
}

/// Minimum number of opened questions over all feasible total assignments.
/// When no total assignment is feasible, returns the plan that places the
/// most workers, with the fewest questions among those.
pub fn brute_force_oracle(instance: &McqInstance) -> Result<OracleOutcome> {
    let n = instance.n_workers();
    let m = instance.n_questions();
    let needed = (m as f64 + 1.0).powi(n as i32);
    if needed > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            needed,
            limit: ORACLE_LIMIT,
        });
    }

    let run = |allow_idle: bool| {
        let mut search = Search {
            instance,
            allow_idle,
            load: vec![0.0; m],
            users: vec![0; m],
            current: vec![None; n],
            distinct: 0,
            placed: 0,
            best: None,
        };
        search.visit(0);
        search.best
    };

    let (total, best) = match run(false) {
        Some(best) => (true, best),
        None => (false, run(true).expect("the all-idle assignment always exists")),
    };
    let (placed, min_questions, cells) = best;

    let mut plan = AssignmentPlan::default();
    for (i, cell) in cells.into_iter().enumerate() {
        if let Some(j) = cell {
            let kind = if plan.opened.contains(&instance.matrix.questions()[j]) {
                StepKind::Join
            } else {
                StepKind::Open
            };
            plan.push(instance.matrix.workers()[i], instance.matrix.questions()[j], kind);
        }
    }
    Ok(OracleOutcome {
        min_questions,
        total,
        placed,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_workers_pack_into_one_question() {
        let instance = McqInstance::from_rows(&[vec![0.2, 0.2], vec![0.1, 0.1]], &[0.35, 0.25]);
        let outcome = brute_force_oracle(&instance).unwrap();
        assert!(outcome.total);
        assert_eq!(outcome.min_questions, 1);
        assert_eq!(outcome.plan.opened.len(), 1);
    }

    #[test]
    fn zero_workers() {
        let instance = McqInstance::from_rows(&[], &[0.3, 0.2]);
        let outcome = brute_force_oracle(&instance).unwrap();
        assert_eq!(outcome.min_questions, 0);
        assert!(outcome.total);
        assert!(outcome.plan.assignments.is_empty());
    }

    #[test]
    fn partial_placement_when_nothing_total_exists() {
        // each question holds exactly one of the three workers
        let instance = McqInstance::from_rows(
            &[vec![0.3, 0.3], vec![0.3, 0.3], vec![0.3, 0.3]],
            &[0.4, 0.4],
        );
        let outcome = brute_force_oracle(&instance).unwrap();
        assert!(!outcome.total);
        assert_eq!(outcome.placed, 2);
        assert_eq!(outcome.min_questions, 2);
    }

    #[test]
    fn refuses_large_instances() {
        let rows = vec![vec![0.1; 8]; 12];
        let instance = McqInstance::from_rows(&rows, &[1.0; 8]);
        assert!(matches!(
            brute_force_oracle(&instance),
            Err(Error::OracleTooLarge { .. })
        ));
    }
}
