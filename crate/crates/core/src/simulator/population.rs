use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assignment::selection_probability;
use crate::inference::EXPERTISE_CAP;

pub const EXPERTISE_MEAN: f64 = 0.7;
pub const EXPERTISE_STD: f64 = 0.1;
pub const EASINESS_MEAN: f64 = 0.9;
pub const EASINESS_STD: f64 = 0.03;

/// Hidden ground truth of a synthetic experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    /// e* per worker, in [0, 1).
    pub worker_expertise: Vec<f64>,
    /// d* per question, in (0, 1).
    pub question_easiness: Vec<f64>,
    pub truths: Vec<usize>,
}

impl SyntheticPopulation {
    pub fn generate<R: Rng + ?Sized>(
        num_questions: usize,
        num_choices: usize,
        num_workers: usize,
        rng: &mut R,
    ) -> Self {
        let expertise = Normal::new(EXPERTISE_MEAN, EXPERTISE_STD).expect("valid normal");
        let easiness = Normal::new(EASINESS_MEAN, EASINESS_STD).expect("valid normal");
        let worker_expertise = (0..num_workers)
            .map(|_| expertise.sample(rng).clamp(0.0, EXPERTISE_CAP))
            .collect();
        let question_easiness = (0..num_questions)
            .map(|_| easiness.sample(rng).clamp(1e-9, EXPERTISE_CAP))
            .collect();
        let truths = (0..num_questions)
            .map(|_| rng.random_range(0..num_choices))
            .collect();
        SyntheticPopulation {
            worker_expertise,
            question_easiness,
            truths,
        }
    }
}

/// A worker's vote: the truth with probability 1 / (1 + e^{-e·d}), otherwise
/// one of the wrong choices uniformly.
pub fn simulate_vote<R: Rng + ?Sized>(
    expertise: f64,
    easiness: f64,
    truth: usize,
    num_choices: usize,
    rng: &mut R,
) -> usize {
    let p = selection_probability(expertise, easiness);
    if rng.random::<f64>() < p {
        return truth;
    }
    let wrong = rng.random_range(0..num_choices - 1);
    if wrong >= truth {
        wrong + 1
    } else {
        wrong
    }
}
