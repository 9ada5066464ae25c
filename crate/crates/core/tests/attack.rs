//! Attack constructions checked against direct score evaluation and
//! end-to-end replays through the bandit.

use bandit_hijack::attack::{
    build_constraint_linear, build_constraint_ntk, full_trajectory_attack, osa_attack, replay,
    trajectory_free_attack, trajectory_free_attack_with, AttackConfig, Objective, TargetTrajectory,
};
use bandit_hijack::bandit::{run_bandit, ucb_score, AlgoConfig, Algorithm};
use bandit_hijack::data::{make_arm_suite, sample_logged_data, ArmSuite, LoggedDataset};
use bandit_hijack::qp::SolverStatus;
use bandit_hijack::reward::{
    train_mlp, Activation, LinearReward, MlpReward, Perturbation, RewardModel, TrainConfig,
};
use proptest::prelude::*;

fn linear_setup(k: usize, d: usize, horizon: usize, seed: u64) -> (ArmSuite, LoggedDataset, RewardModel) {
    let suite = make_arm_suite(k, d, seed).unwrap();
    let data = sample_logged_data(&suite, horizon, seed + 1000).unwrap();
    let model = RewardModel::Linear(LinearReward::new(suite.w.clone()).unwrap());
    (suite, data, model)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<usize>, usize, Vec<f64>)> {
    (2usize..6, 1usize..8).prop_flat_map(|(k, d)| {
        (
            prop::collection::vec(-2.0f64..2.0, d),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), k),
            prop::collection::vec(1usize..50, k),
            (k + 1)..500,
            prop::collection::vec(-3.0f64..3.0, d),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn linear_constraint_agrees_with_scores((w, means, counts, t, delta) in instance()) {
        let (i, j) = (0, means.len() - 1);
        let (t_vec, r) = build_constraint_linear(&w, &means, &counts, t, i, j).unwrap();
        let shifted: Vec<f64> = w.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let si = ucb_score(dot(&shifted, &means[i]), counts[i], t).unwrap();
        let sj = ucb_score(dot(&shifted, &means[j]), counts[j], t).unwrap();
        let lhs = dot(&delta, &t_vec) - r;
        // skip instances decided within rounding
        prop_assume!((si - sj).abs() > 1e-9);
        prop_assert_eq!(lhs > 0.0, si > sj, "lhs {} scores {} {}", lhs, si, sj);
    }

    #[test]
    fn identity_network_reduces_to_linear((w, means, counts, t, _) in instance(), bias in -1.0f64..1.0) {
        let d = w.len();
        let mut params = w.clone();
        params.push(bias);
        let mut mask = vec![true; d];
        mask.push(false);
        let net = MlpReward::new(vec![d, 1], params, Activation::Identity, mask).unwrap();
        let grads = means.clone();
        let outputs: Vec<f64> = means.iter().map(|m| dot(&w, m) + bias).collect();
        let (i, j) = (0, means.len() - 1);
        let lin = build_constraint_linear(&w, &means, &counts, t, i, j).unwrap();
        let ntk = build_constraint_ntk(&net, &grads, &outputs, &counts, t, i, j).unwrap();
        for (a, b) in lin.0.iter().zip(&ntk.0) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((lin.1 - ntk.1).abs() <= 1e-9);
    }
}

#[test]
fn ntk_constraint_at_zero_matches_network_scores() {
    let suite = make_arm_suite(3, 6, 4).unwrap();
    let data = sample_logged_data(&suite, 12, 5).unwrap();
    let net = bandit_hijack::reward::random_mlp(&[6, 16, 1], 1, 8).unwrap();
    let counts = [4usize, 7, 2];
    let t = 14;
    let mut grads = Vec::new();
    let mut outputs = Vec::new();
    for (a, &n) in counts.iter().enumerate() {
        let mut g = vec![0.0; net.free_count()];
        let mut f = 0.0;
        for j in 0..n {
            let (out, grad) = net.output_and_gradient(data.sample(a, j)).unwrap();
            f += out / n as f64;
            for (gi, v) in g.iter_mut().zip(grad) {
                *gi += v / n as f64;
            }
        }
        grads.push(g);
        outputs.push(f);
    }
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        let (_, r) = build_constraint_ntk(&net, &grads, &outputs, &counts, t, i, j).unwrap();
        let si = ucb_score(outputs[i], counts[i], t).unwrap();
        let sj = ucb_score(outputs[j], counts[j], t).unwrap();
        // δ = 0 satisfies `0 > R` exactly when arm i already wins
        assert_eq!(0.0 > r, si > sj);
    }
}

#[test]
fn full_trajectory_replays_its_target() {
    let (k, d, horizon) = (3, 400, 40);
    for seed in 0..5 {
        let (suite, data, model) = linear_setup(k, d, horizon, seed);
        let target = TargetTrajectory::round_robin(k, horizon, suite.optimal_arm);
        let cfg = AttackConfig::new(AlgoConfig::ucb(horizon));
        let res = full_trajectory_attack(&cfg, &data, &model, &target).unwrap();
        assert_eq!(res.status, SolverStatus::Optimal);
        assert_eq!(res.constraint_count, (k - 1) * (horizon - k));
        assert!(res.min_slack >= 0.0);
        let trace = run_bandit(&cfg.algo, &data, &model, &res.delta).unwrap();
        assert_eq!(trace.arms, target.0);
    }
}

#[test]
fn clean_target_needs_only_margin_scale_perturbation() {
    let (k, d, horizon) = (3, 200, 60);
    let (_, data, model) = linear_setup(k, d, horizon, 21);
    let cfg = AttackConfig::new(AlgoConfig::ucb(horizon));
    let clean = run_bandit(&cfg.algo, &data, &model, &Perturbation::zeros(d)).unwrap();
    let res = full_trajectory_attack(&cfg, &data, &model, &TargetTrajectory(clean.arms)).unwrap();
    assert_eq!(res.status, SolverStatus::Optimal);
    assert!(res.l2 <= 1e-5, "‖δ‖ = {}", res.l2);
}

#[test]
fn two_dimensions_are_mostly_infeasible() {
    let (k, horizon) = (3, 100);
    // three arms cannot be orthonormal in the plane; spread them at 120°
    let s = 3f64.sqrt() / 2.0;
    let suite = ArmSuite {
        k,
        d: 2,
        means: vec![vec![1.0, 0.0], vec![-0.5, s], vec![-0.5, -s]],
        w: vec![1.0, 0.0],
        optimal_arm: 0,
    };
    let model = RewardModel::Linear(LinearReward::new(suite.w.clone()).unwrap());
    let mut infeasible = 0;
    for seed in 0..20 {
        let data = sample_logged_data(&suite, horizon, 300 + seed).unwrap();
        let target = TargetTrajectory::round_robin(k, horizon, suite.optimal_arm);
        let cfg = AttackConfig::new(AlgoConfig::ucb(horizon));
        let res = full_trajectory_attack(&cfg, &data, &model, &target).unwrap();
        infeasible += (res.status == SolverStatus::Infeasible) as usize;
    }
    assert!(infeasible >= 15, "only {infeasible}/20 infeasible");
}

#[test]
fn trajectory_free_is_no_larger_than_full_on_the_same_sequence() {
    let (k, d, horizon) = (3, 400, 40);
    for seed in 0..5 {
        let (suite, data, model) = linear_setup(k, d, horizon, 40 + seed);
        let target = TargetTrajectory::round_robin(k, horizon, suite.optimal_arm);
        let cfg = AttackConfig::new(AlgoConfig::ucb(horizon));
        let full = full_trajectory_attack(&cfg, &data, &model, &target).unwrap();
        let free = trajectory_free_attack_with(&cfg, &data, &model, suite.optimal_arm, &target).unwrap();
        assert_eq!(free.constraint_count, horizon - k);
        assert!(free.l2 <= full.l2 + 1e-9, "{} > {}", free.l2, full.l2);
        let default = trajectory_free_attack(&cfg, &data, &model, suite.optimal_arm).unwrap();
        assert!((default.l2 - free.l2).abs() <= 1e-12);
    }
}

#[test]
fn two_arm_round_robin_is_the_other_arm() {
    let target = TargetTrajectory::round_robin(2, 10, 0);
    assert_eq!(target.0, vec![0, 1, 1, 1, 1, 1, 1, 1, 1, 1]);
}

#[test]
fn osa_replays_away_from_the_optimal_arm() {
    let (k, d, horizon) = (3, 400, 60);
    for algorithm in [Algorithm::Ucb, Algorithm::etc(), Algorithm::epsilon_greedy()] {
        for seed in 0..4 {
            let (suite, data, model) = linear_setup(k, d, horizon, 70 + seed);
            let cfg = AttackConfig::new(AlgoConfig { algorithm, horizon, seed });
            let res = osa_attack(&cfg, &data, &model, suite.optimal_arm).unwrap();
            assert_eq!(res.status, SolverStatus::Optimal);
            assert!(res.constraint_count < horizon - k, "{:?}: {}", algorithm, res.constraint_count);
            assert!(res.constraint_rounds.iter().all(|&t| t > k));
            let (_, asr) = replay(&cfg.algo, &data, &model, &res.delta, &Objective::Avoid(suite.optimal_arm)).unwrap();
            assert_eq!(asr, 1.0, "{algorithm:?} seed {seed}");
        }
    }
}

#[test]
fn osa_adds_nothing_when_already_avoiding() {
    // arm 0 only ever logs very low rewards
    let arms = vec![vec![-50.0; 30], (0..30).map(|j| j as f64 % 3.0).collect(), vec![1.0; 30]];
    let data = LoggedDataset::from_blocks(1, arms).unwrap();
    let model = RewardModel::Linear(LinearReward::new(vec![1.0]).unwrap());
    let cfg = AttackConfig::new(AlgoConfig::ucb(30));
    let res = osa_attack(&cfg, &data, &model, 0).unwrap();
    assert_eq!(res.constraint_count, 0);
    assert_eq!(res.l2, 0.0);
}

#[test]
fn osa_on_a_trained_network_replays_through_the_network() {
    let (k, d, horizon) = (3, 20, 60);
    let suite = make_arm_suite(k, d, 12).unwrap();
    let data = sample_logged_data(&suite, horizon, 13).unwrap();
    let trained = train_mlp(&data, &suite, &TrainConfig { hidden: vec![500], seed: 3, ..Default::default() }).unwrap();
    let model = RewardModel::Mlp(trained.model);
    let cfg = AttackConfig::new(AlgoConfig::ucb(horizon));
    let res = osa_attack(&cfg, &data, &model, suite.optimal_arm).unwrap();
    assert_eq!(res.status, SolverStatus::Optimal);
    let (_, asr) = replay(&cfg.algo, &data, &model, &res.delta, &Objective::Avoid(suite.optimal_arm)).unwrap();
    assert_eq!(asr, 1.0);
}

#[test]
fn result_exports_as_json() {
    let (suite, data, model) = linear_setup(3, 100, 30, 2);
    let cfg = AttackConfig::new(AlgoConfig::ucb(30));
    let res = osa_attack(&cfg, &data, &model, suite.optimal_arm).unwrap();
    let v: serde_json::Value = serde_json::from_str(&res.to_json().unwrap()).unwrap();
    assert_eq!(v["constraint_count"], res.constraint_count);
    assert_eq!(v["status"], "optimal");
    assert!(v["constraint_log"].is_array());
}
