use abcboost::boost::{
    abc_candidate_pass, gap_schedule, train_with_observer, tree_fit_cost, BaseStep, BoostError,
};
use abcboost::numerics::ScoreState;
use abcboost::synth::Blobs;
use abcboost::{train, Algorithm, Dataset, TrainConfig};
use proptest::prelude::*;

/// One feature `x = 1..6`, labels `[0, 0, 1, 1, 1, 2]`.
fn six() -> Dataset {
    Dataset::new(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]], vec![0, 0, 1, 1, 1, 2], 3).unwrap()
}

fn config(algo: Algorithm, j: usize, nu: f64, m: usize) -> TrainConfig {
    let mut c = TrainConfig::new(algo);
    c.n_leaves = j;
    c.shrinkage = nu;
    c.n_iterations = m;
    c
}

fn loss_of(rows: &[[f64; 3]], labels: &[usize]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(f, &y)| f.iter().map(|v| v.exp()).sum::<f64>().ln() - f[y])
        .sum()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

// Worked by hand: at p = 1/3 every class tree splits the line once, with
// leaf values (K-1)/K * sum(r - p) / sum(p (1 - p)).
const PLAIN_SPLITS: [(f64, f64, f64); 3] = [(2.5, 2.0, -1.0), (2.5, -1.0, 1.25), (5.5, -1.0, 2.0)];

#[test]
fn first_mart_iteration_by_hand() {
    let ds = six();
    for algo in [Algorithm::Mart, Algorithm::LogitBoost] {
        let model = train(&config(algo, 2, 0.1, 1), &ds, None).unwrap();
        let stage = &model.stages[0];
        for (ct, &(thr, left, right)) in stage.trees.iter().zip(&PLAIN_SPLITS) {
            let abcboost::tree::Node::Split { threshold, .. } = ct.tree.nodes()[0] else { panic!("stump expected") };
            assert_eq!(threshold, thr, "{algo} class {}", ct.class);
            assert!(close(ct.tree.predict(&[thr - 0.5]), left), "{algo} class {}", ct.class);
            assert!(close(ct.tree.predict(&[thr + 0.5]), right), "{algo} class {}", ct.class);
        }
        let a = [0.2, -0.1, -0.1];
        let b = [-0.1, 0.125, -0.1];
        let c = [-0.1, 0.125, 0.2];
        let want = loss_of(&[a, a, b, b, b, c], &[0, 0, 1, 1, 1, 2]);
        assert!(close(model.metrics[0].train_loss, want), "{algo}: {} vs {want}", model.metrics[0].train_loss);
    }
}

#[test]
fn first_abc_candidate_by_hand() {
    // base 0: num = r_k - r_0, h = 3 * 2/9 for every sample
    let ds = six();
    let state = ScoreState::new(6, 3);
    let pass = abc_candidate_pass(&state, &ds, 0, &config(Algorithm::AbcMart, 2, 0.1, 1)).unwrap();
    let expected = [(1usize, -1.5, 1.125), (2, -1.5, 0.375)];
    for (ct, &(class, left, right)) in pass.trees.iter().zip(&expected) {
        assert_eq!(ct.class, class);
        assert!(close(ct.tree.predict(&[2.0]), left));
        assert!(close(ct.tree.predict(&[3.0]), right));
    }
    let a = [0.3, -0.15, -0.15];
    let b = [-0.15, 0.1125, 0.0375];
    let want = loss_of(&[a, a, b, b, b, b], &[0, 0, 1, 1, 1, 2]);
    assert!(close(pass.loss, want), "{} vs {want}", pass.loss);
    assert!(close(pass.state.score(5, 0), -0.15));
}

#[test]
fn early_stop_cuts_the_run() {
    let ds = Blobs { n_classes: 3, n_informative: 2, n_noise: 0, separation: 3.0, seed: 2 }.sample(90, 1).unwrap();
    let mut c = config(Algorithm::AbcLogitBoost, 6, 0.3, 400);
    c.gap = 7;
    c.early_stop_loss = Some(1e-3);
    let model = train(&c, &ds, None).unwrap();
    let m = model.n_iterations();
    assert!(m < 400);
    assert!(model.metrics[m - 1].train_loss <= 1e-3);
    assert!(model.metrics[m - 2].train_loss > 1e-3);
    assert_eq!(model.tree_fit_count, tree_fit_cost(3, m, 7, Algorithm::AbcLogitBoost));
}

#[test]
fn bad_inputs_are_rejected() {
    let ds = Dataset::new(vec![vec![0.0, 1.0, 2.0, 3.0]], vec![0, 1, 0, 1], 3).unwrap();
    let err = train(&config(Algorithm::Mart, 2, 0.1, 1), &ds, None).unwrap_err();
    assert!(matches!(err, BoostError::Data(_)), "{err}");

    let ds = six();
    let narrow = Dataset::new(vec![], vec![0, 1, 2], 3).unwrap();
    let err = train(&config(Algorithm::Mart, 2, 0.1, 1), &ds, Some(&narrow)).unwrap_err();
    assert!(matches!(err, BoostError::Dimension { .. }), "{err}");
    let err = train(&config(Algorithm::Mart, 1, 0.1, 1), &ds, None).unwrap_err();
    assert!(matches!(err, BoostError::Config(_)), "{err}");
}

#[test]
fn huge_newton_steps_keep_relative_balance() {
    // With nu = 1 and a stale base, a confidently wrong sample can carry a
    // Hessian near the probability floor and push |F| towards 1e12 or more.
    // The constraint then holds only to rounding relative to |F|.
    let ds = Blobs { n_classes: 5, n_informative: 4, n_noise: 2, separation: 1.2, seed: 7 }.sample(300, 70).unwrap();
    let mut c = config(Algorithm::AbcLogitBoost, 10, 1.0, 60);
    c.gap = 40;
    let mut worst_ratio = 0.0f64;
    let mut largest = 0.0f64;
    train_with_observer(&c, &ds, None, |_, s| {
        for i in 0..s.n_samples {
            let row = s.score_row(i);
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            largest = largest.max(scale);
            if scale > 0.0 {
                worst_ratio = worst_ratio.max(row.iter().sum::<f64>().abs() / scale);
            }
        }
    })
    .unwrap();
    assert!(largest > 1e6, "expected a blow-up at these settings, max |F| = {largest:e}");
    assert!(worst_ratio <= 8.0 * 5.0 * f64::EPSILON, "{worst_ratio:e}");
}

fn small_dataset(n: usize, k: usize, d: usize, seed: u64) -> Dataset {
    Blobs { n_classes: k, n_informative: d, n_noise: 1, separation: 1.0, seed }.sample(n, seed + 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_invariants(
        n in 12usize..40,
        k in 3usize..5,
        d in 1usize..4,
        seed in 0u64..1000,
        algo_ix in 0usize..4,
        j in 2usize..7,
        nu in prop_oneof![Just(0.1), Just(0.3), Just(0.5)],
        gap in 1usize..5,
        m in 0usize..8,
    ) {
        let ds = small_dataset(n, k, d, seed);
        let algo = Algorithm::ALL[algo_ix];
        let mut c = config(algo, j, nu, m);
        c.gap = gap;
        let mut last: Option<ScoreState> = None;
        let mut worst = 0.0f64;
        let model = train_with_observer(&c, &ds, Some(&ds), |_, s| {
            if algo.is_abc() {
                for i in 0..s.n_samples {
                    worst = worst.max(s.score_row(i).iter().sum::<f64>().abs());
                }
            }
            last = Some(s.clone());
        }).unwrap();

        prop_assert!(worst <= 1e-8);
        prop_assert_eq!(model.tree_fit_count, tree_fit_cost(k, m, gap, algo));
        prop_assert!(model.stages.iter().flat_map(|s| &s.trees).all(|t| t.tree.n_leaves() <= j));

        // replaying the stored trees reproduces the training scores bit for bit
        let replay = model.score_dataset(&ds, None).unwrap();
        let trained = last.unwrap_or_else(|| ScoreState::new(n, k));
        prop_assert!(replay.f.iter().zip(&trained.f).all(|(a, b)| a.to_bits() == b.to_bits()));
        if let Some(row) = model.metrics.last() {
            prop_assert_eq!(row.test_error, Some(replay.misclassified(&ds.labels)));
            prop_assert_eq!(row.train_loss.to_bits(), replay.neg_log_likelihood(&ds.labels).to_bits());
        }

        if algo.is_abc() {
            for (i, b) in model.base_history.iter().enumerate() {
                prop_assert!(b.is_some());
                if gap_schedule(i + 1, gap) == BaseStep::Reuse {
                    prop_assert_eq!(*b, model.base_history[i - 1]);
                }
            }
        } else {
            prop_assert!(model.base_history.iter().all(Option::is_none));
        }
    }
}
