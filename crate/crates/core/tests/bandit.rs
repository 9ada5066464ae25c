//! End-to-end properties of the bandit replay: trace invariants, argmax
//! shift invariance, log consumption order and a clean-run sanity floor.

use bandit_hijack::bandit::{run_bandit, run_with_rewards, AlgoConfig, Algorithm, RoundKind};
use bandit_hijack::data::{make_arm_suite, sample_logged_data, LoggedDataset};
use bandit_hijack::reward::{LinearReward, Perturbation, RewardModel};
use proptest::prelude::*;

fn dataset(k: usize, n: usize, rewards: &[f64]) -> LoggedDataset {
    // one-dimensional samples whose value is the reward itself
    let arms = (0..k).map(|a| rewards[a * n..(a + 1) * n].to_vec()).collect();
    LoggedDataset::from_blocks(1, arms).unwrap()
}

fn identity() -> RewardModel {
    RewardModel::Linear(LinearReward::new(vec![1.0]).unwrap())
}

fn algorithms() -> impl Strategy<Value = Algorithm> {
    prop_oneof![
        Just(Algorithm::Ucb),
        Just(Algorithm::etc()),
        Just(Algorithm::epsilon_greedy()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn constant_shift_leaves_trace_unchanged(
        k in 2usize..5,
        horizon in 25usize..60,
        rewards in prop::collection::vec(-2.0f64..2.0, 4 * 60),
        shift in -10.0f64..10.0,
        algorithm in algorithms(),
        seed in 0u64..1000,
    ) {
        let data = dataset(k, 60, &rewards);
        let cfg = AlgoConfig { algorithm, horizon, seed };
        let base = run_with_rewards(&cfg, &data, |a, j| Ok(data.sample(a, j)[0])).unwrap();
        let moved = run_with_rewards(&cfg, &data, |a, j| Ok(data.sample(a, j)[0] + shift)).unwrap();
        prop_assert_eq!(base.arms, moved.arms);
    }

    #[test]
    fn trace_invariants_hold(
        k in 2usize..5,
        horizon in 25usize..60,
        rewards in prop::collection::vec(-2.0f64..2.0, 4 * 60),
        algorithm in algorithms(),
        seed in 0u64..1000,
    ) {
        let data = dataset(k, 60, &rewards);
        let cfg = AlgoConfig { algorithm, horizon, seed };
        let mut reads = vec![Vec::new(); k];
        let trace = run_with_rewards(&cfg, &data, |a, j| {
            reads[a].push(j);
            Ok(data.sample(a, j)[0])
        })
        .unwrap();
        // the j-th pull of an arm reads its j-th logged sample
        for r in &reads {
            prop_assert!(r.iter().enumerate().all(|(i, &j)| i == j));
        }
        prop_assert_eq!(trace.final_counts().iter().sum::<usize>(), horizon);
        for t in 1..horizon {
            for a in 0..k {
                prop_assert!(trace.counts[t][a] >= trace.counts[t - 1][a]);
            }
            prop_assert_eq!(trace.consumed[t], trace.counts[t][trace.arms[t]] - 1);
        }
        if algorithm == Algorithm::Ucb {
            for t in 0..k {
                prop_assert_eq!(trace.arms[t], t);
            }
        }
        for (t, kind) in trace.kinds.iter().enumerate() {
            if *kind == RoundKind::Decide {
                let s = &trace.scores[t];
                let best = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let first = s.iter().position(|&v| v == best).unwrap();
                prop_assert_eq!(trace.arms[t], first);
            }
        }
    }
}

#[test]
fn traces_are_bit_reproducible() {
    let suite = make_arm_suite(4, 50, 9).unwrap();
    let data = sample_logged_data(&suite, 120, 10).unwrap();
    let model = RewardModel::Linear(LinearReward::new(suite.w.clone()).unwrap());
    for algorithm in [Algorithm::Ucb, Algorithm::etc(), Algorithm::epsilon_greedy()] {
        let cfg = AlgoConfig { algorithm, horizon: 120, seed: 5 };
        let a = run_bandit(&cfg, &data, &model, &Perturbation::zeros(50)).unwrap();
        let b = run_bandit(&cfg, &data, &model, &Perturbation::zeros(50)).unwrap();
        assert_eq!(a.arms, b.arms);
        assert_eq!(
            a.rewards.iter().map(|r| r.to_bits()).collect::<Vec<_>>(),
            b.rewards.iter().map(|r| r.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn two_rounds_two_arms_is_warm_up_only() {
    let data = dataset(2, 2, &[5.0, -5.0, 9.0, 9.0]);
    let trace = run_bandit(&AlgoConfig::ucb(2), &data, &identity(), &Perturbation::zeros(1)).unwrap();
    assert_eq!(trace.arms, vec![0, 1]);
}

#[test]
fn clean_ucb_favours_the_optimal_arm() {
    let (k, d, horizon) = (3, 10, 200);
    let mut share = 0.0;
    for seed in 0..50u64 {
        let suite = make_arm_suite(k, d, 2 * seed).unwrap();
        let data = sample_logged_data(&suite, horizon, 2 * seed + 1).unwrap();
        let model = RewardModel::Linear(LinearReward::new(suite.w.clone()).unwrap());
        let trace = run_bandit(&AlgoConfig::ucb(horizon), &data, &model, &Perturbation::zeros(d)).unwrap();
        share += trace.final_counts()[suite.optimal_arm] as f64 / horizon as f64;
    }
    share /= 50.0;
    assert!(share >= 0.6, "optimal arm share {share:.3}");
}

#[test]
fn clean_ucb_high_dimension_pulls_optimal_most() {
    let (k, d, horizon) = (3, 1000, 100);
    let mut totals = [0usize; 2];
    for seed in 0..20u64 {
        let suite = make_arm_suite(k, d, 100 + seed).unwrap();
        let data = sample_logged_data(&suite, horizon, 200 + seed).unwrap();
        let model = RewardModel::Linear(LinearReward::new(suite.w.clone()).unwrap());
        let counts = run_bandit(&AlgoConfig::ucb(horizon), &data, &model, &Perturbation::zeros(d))
            .unwrap()
            .final_counts();
        let best_other = (0..k).filter(|&a| a != suite.optimal_arm).map(|a| counts[a]).max().unwrap();
        totals[0] += counts[suite.optimal_arm];
        totals[1] += best_other;
    }
    assert!(totals[0] > totals[1], "{totals:?}");
}
