//! First Match and Best Match.
//!
//! Both start from the (worker, question) cell with the smallest feasible
//! remaining score U = c_j - E²I_ij, then walk the other workers in a seeded
//! random order. A worker who fits into an open question joins one (the
//! earliest opened for First Match, the tightest fit for Best Match);
//! otherwise the closed question with the smallest feasible U is opened.

use rand::seq::SliceRandom;
use rand::RngCore;

use super::{AssignmentPlan, McqInstance, StepKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum JoinRule {
    EarliestOpened,
    TightestFit,
}

pub fn first_match(instance: &McqInstance, rng: &mut dyn RngCore) -> AssignmentPlan {
    greedy(instance, JoinRule::EarliestOpened, rng)
}

pub fn best_match(instance: &McqInstance, rng: &mut dyn RngCore) -> AssignmentPlan {
    greedy(instance, JoinRule::TightestFit, rng)
}

fn greedy(instance: &McqInstance, rule: JoinRule, rng: &mut dyn RngCore) -> AssignmentPlan {
    let matrix = &instance.matrix;
    let n = matrix.n_workers();
    let m = matrix.n_questions();
    let mut plan = AssignmentPlan::default();
    if n == 0 {
        return plan;
    }
    if m == 0 {
        log::warn!("no assignable questions; {n} workers left idle");
        return plan;
    }

    // remaining[j] is c_j minus the E²I already assigned to q_j, so
    // U_ij = remaining[j] - E²I_ij.
    let mut remaining = instance.capacity.clone();
    let mut is_open = vec![false; m];
    let mut open_cols: Vec<usize> = Vec::new();
    let u = |remaining: &[f64], i: usize, j: usize| remaining[j] - matrix.get(i, j);

    let mut seed: Option<(usize, usize)> = None;
    for i in 0..n {
        for j in 0..m {
            if !matrix.is_allowed(i, j) {
                continue;
            }
            let value = u(&remaining, i, j);
            // strict comparison keeps the lowest (worker, question) on ties
            if value >= 0.0 && seed.is_none_or(|(si, sj)| value < u(&remaining, si, sj)) {
                seed = Some((i, j));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).filter(|&i| Some(i) != seed.map(|s| s.0)).collect();
    order.shuffle(rng);

    let mut steps: Vec<(usize, usize, StepKind)> = Vec::with_capacity(n);
    if let Some((i, j)) = seed {
        steps.push((i, j, StepKind::Seed));
        remaining[j] -= matrix.get(i, j);
        is_open[j] = true;
        open_cols.push(j);
    }

    for i in order {
        if !(0..m).any(|j| matrix.is_allowed(i, j)) {
            continue;
        }
        let mut choice: Option<(usize, StepKind)> = None;

        for &j in &open_cols {
            if !matrix.is_allowed(i, j) || u(&remaining, i, j) < 0.0 {
                continue;
            }
            match rule {
                JoinRule::EarliestOpened => {
                    choice = Some((j, StepKind::Join));
                    break;
                }
                JoinRule::TightestFit => {
                    if choice.is_none_or(|(b, _)| u(&remaining, i, j) < u(&remaining, i, b)) {
                        choice = Some((j, StepKind::Join));
                    }
                }
            }
        }

        if choice.is_none() {
            for j in 0..m {
                if is_open[j] || !matrix.is_allowed(i, j) {
                    continue;
                }
                let value = u(&remaining, i, j);
                if value >= 0.0 && choice.is_none_or(|(b, _)| value < u(&remaining, i, b)) {
                    choice = Some((j, StepKind::Open));
                }
            }
        }

        if choice.is_none() {
            // Nothing fits: fall back to the question with the most room left.
            for j in 0..m {
                if matrix.is_allowed(i, j)
                    && choice.is_none_or(|(b, _)| remaining[j] > remaining[b])
                {
                    choice = Some((j, StepKind::Overflow));
                }
            }
        }

        let (j, kind) = choice.expect("worker has at least one allowed question");
        steps.push((i, j, kind));
        remaining[j] -= matrix.get(i, j);
        if !is_open[j] {
            is_open[j] = true;
            open_cols.push(j);
        }
    }

    for (i, j, kind) in steps {
        plan.push(matrix.workers()[i], matrix.questions()[j], kind);
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{QuestionId, WorkerId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn table1() -> McqInstance {
        McqInstance::from_rows(&[vec![0.2, 0.2], vec![0.1, 0.1]], &[0.35, 0.25])
    }

    #[test]
    fn table1_hand_trace() {
        for solve in [first_match, best_match] {
            let plan = solve(&table1(), &mut rng(1));
            // seed U_{1,2} = 0.05, then 0.25 - 0.2 - 0.1 < 0 forces q1 open
            assert_eq!(plan.assignments[&WorkerId(0)], QuestionId(1));
            assert_eq!(plan.assignments[&WorkerId(1)], QuestionId(0));
            assert_eq!(plan.opened, vec![QuestionId(1), QuestionId(0)]);
            assert_eq!(plan.steps[0].kind, StepKind::Seed);
            assert_eq!(plan.steps[1].kind, StepKind::Open);
            assert!(plan.overflow.is_empty());
        }
    }

    #[test]
    fn single_worker_single_question() {
        let instance = McqInstance::from_rows(&[vec![0.1]], &[0.3]);
        let plan = first_match(&instance, &mut rng(0));
        assert_eq!(plan.num_opened(), 1);
        assert_eq!(plan.assignments.len(), 1);
    }

    #[test]
    fn empty_inputs() {
        let plan = first_match(&McqInstance::from_rows(&[], &[0.3]), &mut rng(0));
        assert!(plan.assignments.is_empty());
        let no_questions = McqInstance::new(
            crate::assignment::E2IMatrix::new(vec![WorkerId(0), WorkerId(1)], vec![]),
            vec![],
        );
        let plan = best_match(&no_questions, &mut rng(0));
        assert!(plan.assignments.is_empty());
        assert!(plan.opened.is_empty());
    }

    #[test]
    fn unfittable_worker_overflows() {
        let instance = McqInstance::from_rows(&[vec![0.3], vec![0.3]], &[0.5]);
        let plan = first_match(&instance, &mut rng(0));
        assert_eq!(plan.assignments.len(), 2);
        assert_eq!(plan.steps[1].kind, StepKind::Overflow);
        assert!(plan.overflow.contains(&QuestionId(0)));
        assert!(instance.unflagged_violations(&plan, 0.0).is_empty());
    }

    #[test]
    fn overflow_goes_to_question_with_most_room() {
        // nothing is feasible for either worker
        let instance = McqInstance::from_rows(&[vec![0.9, 0.9], vec![0.9, 0.9]], &[0.2, 0.4]);
        let plan = first_match(&instance, &mut rng(3));
        assert!(plan.steps.iter().all(|s| s.kind == StepKind::Overflow));
        assert_eq!(plan.steps[0].question, QuestionId(1));
        // q1 now has 0.4 - 0.9 left, so q0 has more room
        assert_eq!(plan.steps[1].question, QuestionId(0));
    }

    #[test]
    fn masked_cells_are_never_used() {
        let mut instance = McqInstance::from_rows(&[vec![0.05, 0.05], vec![0.05, 0.05]], &[0.3, 0.3]);
        instance.matrix.mask(1, 0);
        for seed in 0..8 {
            let plan = first_match(&instance, &mut rng(seed));
            assert_eq!(plan.assignments[&WorkerId(1)], QuestionId(1));
        }
        let mut isolated = McqInstance::from_rows(&[vec![0.05]], &[0.3]);
        isolated.matrix.mask(0, 0);
        assert!(best_match(&isolated, &mut rng(0)).assignments.is_empty());
    }

    #[test]
    fn best_match_takes_the_tightest_open_question() {
        let instance = McqInstance::from_rows(
            &[vec![0.3, 0.9], vec![0.9, 0.25], vec![0.28, 0.05]],
            &[0.6, 0.5],
        );
        let mut checked = false;
        for seed in 0..64 {
            let fm = first_match(&instance, &mut rng(seed));
            let bm = best_match(&instance, &mut rng(seed));
            let order: Vec<_> = bm.steps.iter().map(|s| s.worker).collect();
            if order != vec![WorkerId(1), WorkerId(0), WorkerId(2)] {
                continue;
            }
            // w2 sees U = 0.20 on q1 (opened first) and U = 0.02 on q0
            assert_eq!(fm.assignments[&WorkerId(2)], QuestionId(1));
            assert_eq!(bm.assignments[&WorkerId(2)], QuestionId(0));
            checked = true;
            break;
        }
        assert!(checked, "no seed produced the order w1, w0, w2");
    }

    #[test]
    fn same_seed_same_plan() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..4).map(|j| 0.03 * ((i * 7 + j * 3) % 5) as f64 + 0.01).collect())
            .collect();
        let instance = McqInstance::from_rows(&rows, &[0.2, 0.15, 0.3, 0.1]);
        assert_eq!(
            first_match(&instance, &mut rng(9)),
            first_match(&instance, &mut rng(9))
        );
        assert_eq!(
            best_match(&instance, &mut rng(9)),
            best_match(&instance, &mut rng(9))
        );
    }
}
