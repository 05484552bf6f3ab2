use batchcrowd::inference::{
    run_estimation, EstimationState, EstimatorConfig, QuestionId, Vote, WorkerId,
};
use proptest::prelude::*;

/// (questions, choices, workers, votes as (worker, question, choice)).
type Corpus = (usize, usize, usize, Vec<(usize, usize, usize)>);

fn corpus() -> impl Strategy<Value = Corpus> {
    (1usize..6, 2usize..5, 1usize..7).prop_flat_map(|(m, l, n)| {
        let cells = proptest::collection::vec(proptest::option::weighted(0.6, 0..l), m * n);
        cells.prop_map(move |cells| {
            let votes = cells
                .iter()
                .enumerate()
                .filter_map(|(idx, c)| c.map(|c| (idx / m, idx % m, c)))
                .collect();
            (m, l, n, votes)
        })
    })
}

fn build(m: usize, l: usize, n: usize, votes: &[(usize, usize, usize)]) -> EstimationState {
    let mut state = EstimationState::new(m, l, n).unwrap();
    for &(w, q, c) in votes {
        state
            .add_vote(Vote {
                worker: WorkerId(w),
                question: QuestionId(q),
                choice: c,
            })
            .unwrap();
    }
    state
}

fn spread(c: &[f64]) -> f64 {
    let l = c.len();
    let mut total = 0.0;
    for i in 0..l {
        for j in i + 1..l {
            total += (c[i] - c[j]).abs();
        }
    }
    total / (l * (l - 1) / 2) as f64
}

/// Straight-line reimplementation of the dual cycle on plain vectors.
fn reference(m: usize, l: usize, n: usize, votes: &[(usize, usize, usize)], cfg: &EstimatorConfig) -> Vec<Vec<f64>> {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut conf = vec![vec![1.0 / l as f64; l]; m];
    let mut d = vec![0.5; m];
    let mut e = vec![0.5f64; n];
    for _ in 0..cfg.external_iterations {
        let before = conf.clone();
        let mut s = vec![vec![0.0; l]; m];
        for _ in 0..cfg.inner_iterations {
            let score: Vec<f64> = e.iter().map(|&x| -(1.0 - x.min(1.0 - 1e-9)).ln()).collect();
            for q in 0..m {
                let mut raw = vec![0.0; l];
                for &(w, vq, c) in votes {
                    if vq == q {
                        raw[c] += score[w];
                    }
                }
                if cfg.binary_influence && l == 2 {
                    raw = vec![raw[0] - raw[1], raw[1] - raw[0]];
                }
                s[q] = raw.iter().map(|&x| sig(x)).collect();
                conf[q] = s[q].iter().map(|&x| d[q] * x).collect();
            }
            for w in 0..n {
                let mine: Vec<f64> = votes
                    .iter()
                    .filter(|v| v.0 == w)
                    .map(|&(_, q, c)| conf[q][c])
                    .collect();
                if !mine.is_empty() {
                    e[w] = (mine.iter().sum::<f64>() / mine.len() as f64).clamp(0.0, 1.0 - 1e-9);
                }
            }
        }
        for _ in 0..cfg.inner_iterations {
            for q in 0..m {
                d[q] = 1.0 / (1.0 + cfg.k * (-spread(&conf[q])).exp());
                conf[q] = s[q].iter().map(|&x| d[q] * x).collect();
            }
        }
        for c in conf.iter_mut() {
            let total: f64 = c.iter().sum();
            c.iter_mut().for_each(|x| *x /= total);
        }
        let change: f64 = conf
            .iter()
            .zip(&before)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .sum::<f64>()
            / (m * l) as f64;
        if change < cfg.early_stop_tolerance {
            break;
        }
    }
    conf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn confidences_stay_on_the_simplex((m, l, n, votes) in corpus(), k in 0.05f64..=1.0) {
        let mut state = build(m, l, n, &votes);
        let cfg = EstimatorConfig { k, ..EstimatorConfig::default() };
        let trace = run_estimation(&mut state, &cfg).unwrap();
        prop_assert!(!trace.is_empty());
        prop_assert!(trace.changes.iter().all(|&c| c >= 0.0));
        for q in &state.questions {
            let total: f64 = q.confidences.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(q.confidences.iter().all(|&c| c > 0.0 && c < 1.0));
            prop_assert!((0.0..=1.0).contains(&q.easiness_score));
            prop_assert!(q.easiness >= 1.0 / (1.0 + k) - 1e-12 && q.easiness < 1.0);
            if q.votes.is_empty() {
                prop_assert!(q.easiness_score.abs() < 1e-12);
            }
        }
        for w in &state.workers {
            prop_assert!(w.expertise >= 0.0 && w.expertise < 1.0);
            prop_assert!(w.expertise_score >= 0.0 && w.expertise_score.is_finite());
        }
    }

    #[test]
    fn matches_straight_line_reference((m, l, n, votes) in corpus(), k in 0.05f64..=1.0) {
        let cfg = EstimatorConfig { k, ..EstimatorConfig::default() };
        let mut state = build(m, l, n, &votes);
        run_estimation(&mut state, &cfg).unwrap();
        let expected = reference(m, l, n, &votes, &cfg);
        for (q, want) in state.questions.iter().zip(&expected) {
            for (a, b) in q.confidences.iter().zip(want) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn relabeling_is_equivariant((m, l, n, votes) in corpus(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut qperm: Vec<usize> = (0..m).collect();
        let mut wperm: Vec<usize> = (0..n).collect();
        let mut cperm: Vec<usize> = (0..l).collect();
        qperm.shuffle(&mut rng);
        wperm.shuffle(&mut rng);
        cperm.shuffle(&mut rng);

        let cfg = EstimatorConfig::default();
        let mut plain = build(m, l, n, &votes);
        run_estimation(&mut plain, &cfg).unwrap();
        let relabeled: Vec<_> = votes.iter().map(|&(w, q, c)| (wperm[w], qperm[q], cperm[c])).collect();
        let mut moved = build(m, l, n, &relabeled);
        run_estimation(&mut moved, &cfg).unwrap();

        for q in 0..m {
            let a = &plain.questions[q];
            let b = &moved.questions[qperm[q]];
            prop_assert!((a.easiness - b.easiness).abs() < 1e-9);
            for c in 0..l {
                prop_assert!((a.confidences[c] - b.confidences[cperm[c]]).abs() < 1e-9);
            }
        }
        for w in 0..n {
            prop_assert!((plain.workers[w].expertise - moved.workers[wperm[w]].expertise).abs() < 1e-9);
        }
    }

    #[test]
    fn estimation_is_deterministic((m, l, n, votes) in corpus()) {
        let cfg = EstimatorConfig::default();
        let mut a = build(m, l, n, &votes);
        let mut b = build(m, l, n, &votes);
        let ta = run_estimation(&mut a, &cfg).unwrap();
        let tb = run_estimation(&mut b, &cfg).unwrap();
        prop_assert_eq!(ta, tb);
        prop_assert_eq!(a, b);
    }
}
