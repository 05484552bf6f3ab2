//! Tools behind the approximation-ratio argument: expert/normal workers,
//! Type N/E questions, and the regrouping helper that builds overused
//! questions.

use std::collections::BTreeMap;

use super::{AssignmentPlan, McqInstance};
use crate::inference::QuestionId;

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    /// Per matrix row: E²I_ij >= c_j / 2 on every opened question.
    pub expert: Vec<bool>,
    /// Per opened question: true for Type E (has an assigned expert).
    pub type_e: BTreeMap<QuestionId, bool>,
}

impl Classification {
    pub fn type_n_questions(&self) -> impl Iterator<Item = QuestionId> + '_ {
        self.type_e.iter().filter(|&(_, &e)| !e).map(|(&q, _)| q)
    }
}

pub fn classify_experts(instance: &McqInstance, plan: &AssignmentPlan) -> Classification {
    let matrix = &instance.matrix;
    let opened: Vec<usize> = plan
        .opened
        .iter()
        .map(|&q| matrix.question_index(q).expect("opened question in instance"))
        .collect();
    let expert: Vec<bool> = (0..matrix.n_workers())
        .map(|i| {
            opened
                .iter()
                .all(|&j| matrix.get(i, j) >= instance.capacity[j] / 2.0)
        })
        .collect();
    let mut type_e: BTreeMap<QuestionId, bool> = plan.opened.iter().map(|&q| (q, false)).collect();
    for (&w, &q) in &plan.assignments {
        let i = matrix.worker_index(w).expect("plan worker in instance");
        if expert[i] {
            type_e.insert(q, true);
        }
    }
    Classification { expert, type_e }
}

/// Worker rows assigned to each question of `questions`, keeping the order
/// of `questions`.
pub fn groups_in_open_order(
    instance: &McqInstance,
    plan: &AssignmentPlan,
    questions: &[QuestionId],
) -> Vec<Vec<usize>> {
    questions
        .iter()
        .map(|&q| {
            plan.workers_on(q)
                .into_iter()
                .map(|w| instance.matrix.worker_index(w).expect("plan worker in instance"))
                .collect()
        })
        .collect()
}

/// Regroups workers toward earlier questions.
///
/// `groups[j]` holds the worker rows placed on `questions[j]`, in opening
/// order. For i = 1..v-1, the worker with the smallest E²I toward the
/// highest-indexed nonempty group moves into group i; the loop stops once
/// that highest group is group i itself or an earlier one. Returns the new
/// groups and how many of them exceed their question's remaining score.
pub fn helper_procedure(
    groups: &[Vec<usize>],
    questions: &[QuestionId],
    instance: &McqInstance,
) -> (Vec<Vec<usize>>, usize) {
    assert_eq!(groups.len(), questions.len());
    let matrix = &instance.matrix;
    let column = |j: usize| {
        matrix
            .question_index(questions[j])
            .expect("group question in instance")
    };
    let mut groups = groups.to_vec();
    let v = groups.len();

    for i in 0..v.saturating_sub(1) {
        let Some(top) = groups.iter().rposition(|g| !g.is_empty()) else {
            break;
        };
        // top < i once earlier moves emptied every group above i
        if top <= i {
            break;
        }
        let col = column(top);
        let (pos, _) = groups[top]
            .iter()
            .enumerate()
            .min_by(|a, b| matrix.get(*a.1, col).total_cmp(&matrix.get(*b.1, col)))
            .expect("top group is nonempty");
        let worker = groups[top].remove(pos);
        groups[i].push(worker);
    }

    let overused = groups
        .iter()
        .enumerate()
        .filter(|(j, g)| {
            let col = column(*j);
            let load: f64 = g.iter().map(|&w| matrix.get(w, col)).sum();
            load > instance.capacity[col]
        })
        .count();
    (groups, overused)
}
