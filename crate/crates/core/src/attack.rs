//! Minimum-norm reward-model perturbations that hijack offline bandit replay.
//!
//! Three constructions share one machinery: simulate the bandit round by
//! round, turn "arm `a` must outscore arm `b` at round `t`" into an affine
//! constraint on `δ`, and hand the accumulated set to the min-norm solver.
//!
//! * full trajectory: the bandit must follow a prescribed arm sequence;
//! * trajectory-free: along an auxiliary round-robin sequence, the optimal
//!   arm must lose every post-warm-up round;
//! * online score-aware (OSA): constraints are added only where the current
//!   perturbation still lets the optimal arm win, against the runner-up.
//!
//! Rewards enter through a surrogate `r(X; δ) ≈ b(X) + φ(X)ᵀδ` that is exact
//! for linear models (`b = wᵀX`, `φ = X`) and the tangent-space expansion for
//! networks (`b = NN_c(X) − ∇NN_c(X)ᵀδ_c`, `φ = ∇NN_c(X)` at a centre
//! `θ_c = θ + δ_c`).

use std::time::Instant;

use log::{debug, warn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandit::{decision_scores, run_bandit, ucb_bonus, AlgoConfig, Algorithm, BanditTrace, Policy, Step};
use crate::data::LoggedDataset;
use crate::error::{Error, Result};
use crate::linalg::{argmax, axpy, dot};
use crate::qp::{KktResiduals, MinNormSolver, QpProblem, SolverConfig, SolverStatus, DEFAULT_MARGIN};
use crate::reward::{MlpReward, Perturbation, RewardModel};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    FullTrajectory,
    TrajectoryFree,
    Osa,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::FullTrajectory => "full_trajectory",
            AttackKind::TrajectoryFree => "trajectory_free",
            AttackKind::Osa => "osa",
        })
    }
}

/// When the trajectory attacks call the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveSchedule {
    /// Re-solve after every attacked round, as the constraints accumulate.
    EveryRound,
    /// One solve once every constraint is known. Same optimum, less work.
    FinalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub algo: AlgoConfig,
    pub margin: f64,
    pub schedule: SolveSchedule,
    pub solver: SolverConfig,
    /// OSA gives up after this many constraints.
    pub max_constraints: usize,
    /// Extra re-linearizations of a network around `θ + δ` when the replay
    /// under the true network misses the objective.
    pub relinearize: usize,
}

impl AttackConfig {
    pub fn new(algo: AlgoConfig) -> Self {
        Self {
            algo,
            margin: DEFAULT_MARGIN,
            schedule: SolveSchedule::EveryRound,
            solver: SolverConfig::default(),
            max_constraints: 100_000,
            relinearize: 5,
        }
    }
}

/// Where a constraint came from: at `round`, arm `winner` must outscore `loser`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub round: usize,
    pub winner: usize,
    pub loser: usize,
}

/// Constraints `δᵀT_p > R_p`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub dim: usize,
    pub t_vecs: Vec<Vec<f64>>,
    pub r_scalars: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl ConstraintSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.t_vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_vecs.is_empty()
    }

    pub fn push(&mut self, t_vec: Vec<f64>, r: f64, provenance: Provenance) -> Result<()> {
        if t_vec.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: t_vec.len(),
            });
        }
        self.t_vecs.push(t_vec);
        self.r_scalars.push(r);
        self.provenance.push(provenance);
        Ok(())
    }

    pub fn to_problem(&self, margin: f64) -> Result<QpProblem> {
        QpProblem::from_strict(self.dim, self.t_vecs.clone(), &self.r_scalars, margin)
    }

    /// Smallest `δᵀT_p − R_p`; positive when every strict inequality holds.
    pub fn min_slack(&self, delta: &[f64]) -> f64 {
        self.t_vecs
            .iter()
            .zip(&self.r_scalars)
            .map(|(t, r)| dot(t, delta) - r)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Arm sequence `Ã_t`, stored 0-based with `arms[t-1]` for round `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetTrajectory(pub Vec<usize>);

impl TargetTrajectory {
    /// Warm-up `0..K`, then cycle through every arm except `optimal`.
    pub fn round_robin(k: usize, horizon: usize, optimal: usize) -> Self {
        let others: Vec<usize> = (0..k).filter(|&a| a != optimal).collect();
        let arms = (0..horizon)
            .map(|i| if i < k { i } else { others[(i - k) % others.len()] })
            .collect();
        Self(arms)
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    /// Checks the warm-up prefix and, for trajectory-free use, that `avoid` never appears after it.
    pub fn validate(&self, k: usize, avoid: Option<usize>) -> Result<()> {
        if self.0.len() < k {
            return Err(Error::InvalidArgument("target shorter than the warm-up".into()));
        }
        for (i, &a) in self.0.iter().enumerate() {
            if a >= k {
                return Err(Error::InvalidArgument(format!("target arm {a} out of range")));
            }
            if i < k && a != i {
                return Err(Error::InvalidArgument("warm-up rounds cannot be targeted".into()));
            }
            if i >= k && Some(a) == avoid {
                return Err(Error::InvalidArgument(format!(
                    "target selects the avoided arm at round {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// What a replay must achieve.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Follow(TargetTrajectory),
    Avoid(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub kind: AttackKind,
    #[serde(skip)]
    pub delta: Perturbation,
    pub l2: f64,
    pub linf: f64,
    pub constraint_count: usize,
    pub status: SolverStatus,
    pub wall_time: f64,
    /// Rounds that contributed constraints, in insertion order.
    pub constraint_rounds: Vec<usize>,
    pub constraint_log: Vec<Provenance>,
    /// Simulation passes (OSA) or linearizations (networks).
    pub passes: usize,
    /// Constraints added by the first OSA pass alone.
    pub first_pass_constraints: usize,
    pub solver_iterations: usize,
    pub kkt: Option<KktResiduals>,
    /// Smallest slack of the strict inequalities under `δ*`.
    pub min_slack: f64,
}

impl AttackResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `T = S_i − S_j'`, `R = −wᵀT + √(2 ln t)(N_j'^{-1/2} − N_i^{-1/2})`.
///
/// `means[a]` is arm `a`'s running sample mean after `counts[a]` pulls.
pub fn build_constraint_linear(
    w: &[f64],
    means: &[Vec<f64>],
    counts: &[usize],
    t: usize,
    i: usize,
    j: usize,
) -> Result<(Vec<f64>, f64)> {
    check_pair(counts, t, i, j)?;
    let t_vec: Vec<f64> = means[i].iter().zip(&means[j]).map(|(a, b)| a - b).collect();
    let r = -dot(w, &t_vec) + ucb_bonus(counts[j], t) - ucb_bonus(counts[i], t);
    Ok((t_vec, r))
}

/// `T = G_i − G_j'`, `R = −(F_i − F_j') + √(2 ln t)(N_j'^{-1/2} − N_i^{-1/2})` over mean
/// masked gradients `G` and mean outputs `F`.
pub fn build_constraint_ntk(
    model: &MlpReward,
    grad_means: &[Vec<f64>],
    output_means: &[f64],
    counts: &[usize],
    t: usize,
    i: usize,
    j: usize,
) -> Result<(Vec<f64>, f64)> {
    check_pair(counts, t, i, j)?;
    if grad_means[i].len() != model.free_count() {
        return Err(Error::DimensionMismatch {
            expected: model.free_count(),
            got: grad_means[i].len(),
        });
    }
    let t_vec: Vec<f64> = grad_means[i].iter().zip(&grad_means[j]).map(|(a, b)| a - b).collect();
    let r = -(output_means[i] - output_means[j]) + ucb_bonus(counts[j], t) - ucb_bonus(counts[i], t);
    Ok((t_vec, r))
}

fn check_pair(counts: &[usize], t: usize, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::InvalidArgument("an arm cannot compete with itself".into()));
    }
    if t < 2 {
        return Err(Error::ScoreDomain { n: counts[i].min(counts[j]), t });
    }
    for a in [i, j] {
        if counts[a] == 0 {
            return Err(Error::ZeroCount { arm: a });
        }
    }
    Ok(())
}

/// `r(X; δ) ≈ b(X) + φ(X)ᵀδ`.
#[derive(Debug, Clone)]
enum Surrogate<'a> {
    Linear { w: &'a [f64] },
    Tangent { center: MlpReward, shift: Vec<f64> },
}

impl Surrogate<'_> {
    fn for_model(model: &RewardModel) -> Surrogate<'_> {
        match model {
            RewardModel::Linear(m) => Surrogate::Linear { w: &m.w },
            RewardModel::Mlp(m) => Surrogate::Tangent {
                center: m.clone(),
                shift: vec![0.0; m.free_count()],
            },
        }
    }

    fn dim(&self) -> usize {
        match self {
            Surrogate::Linear { w } => w.len(),
            Surrogate::Tangent { shift, .. } => shift.len(),
        }
    }

    /// `(b(X), φ(X))`.
    fn base_and_feature(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Surrogate::Linear { w } => Ok((dot(w, x), x.to_vec())),
            Surrogate::Tangent { center, shift } => {
                let (out, grad) = center.output_and_gradient(x)?;
                Ok((out - dot(&grad, shift), grad))
            }
        }
    }

    fn value(&self, x: &[f64], delta: &[f64]) -> Result<f64> {
        match self {
            Surrogate::Linear { w } => Ok(dot(w, x) + dot(x, delta)),
            Surrogate::Tangent { center, shift } => {
                let (out, grad) = center.output_and_gradient(x)?;
                Ok(out + grad.iter().zip(delta).zip(shift).map(|((g, d), s)| g * (d - s)).sum::<f64>())
            }
        }
    }
}

/// Running per-arm sums of `b` and `φ` along a simulated history.
struct Moments {
    counts: Vec<usize>,
    base: Vec<f64>,
    feature: Vec<Vec<f64>>,
}

impl Moments {
    fn new(k: usize, dim: usize) -> Self {
        Self {
            counts: vec![0; k],
            base: vec![0.0; k],
            feature: vec![vec![0.0; dim]; k],
        }
    }

    fn pull(&mut self, surrogate: &Surrogate, data: &LoggedDataset, arm: usize) -> Result<()> {
        let j = self.counts[arm];
        if j >= data.len(arm) {
            return Err(Error::LogExhausted {
                arm,
                available: data.len(arm),
                requested: j + 1,
            });
        }
        let (b, phi) = surrogate.base_and_feature(data.sample(arm, j))?;
        self.add(arm, b, &phi);
        Ok(())
    }

    fn add(&mut self, arm: usize, base: f64, feature: &[f64]) {
        self.counts[arm] += 1;
        self.base[arm] += base;
        axpy(1.0, feature, &mut self.feature[arm]);
    }

    fn mean(&self, arm: usize) -> (f64, Vec<f64>) {
        let n = self.counts[arm] as f64;
        (self.base[arm] / n, self.feature[arm].iter().map(|v| v / n).collect())
    }
}

/// `winner` outscores `loser`: `δᵀ(Φ̄_w − Φ̄_l) > (B̄_l − B̄_w) + (bonus_l − bonus_w)`.
fn score_constraint(
    winner: (f64, &[f64], f64),
    loser: (f64, &[f64], f64),
) -> (Vec<f64>, f64) {
    let (bw, pw, cw) = winner;
    let (bl, pl, cl) = loser;
    let t_vec = pw.iter().zip(pl).map(|(a, b)| a - b).collect();
    (t_vec, (bl - bw) + (cl - cw))
}

fn feasibility_check(dim: usize, k: usize, horizon: usize) {
    let needed = horizon.saturating_sub(k) * (k - 1);
    if dim <= needed {
        warn!(
            "free dimension {dim} ≤ (T−K)(K−1) = {needed}: the attack may be infeasible"
        );
    }
}

struct Accumulator {
    set: ConstraintSet,
    solver: MinNormSolver,
    margin: f64,
    status: SolverStatus,
    first_pass: Option<usize>,
}

impl Accumulator {
    fn new(dim: usize, cfg: &AttackConfig) -> Self {
        Self {
            set: ConstraintSet::new(dim),
            solver: MinNormSolver::new(dim, cfg.solver),
            margin: cfg.margin,
            status: SolverStatus::Optimal,
            first_pass: None,
        }
    }

    fn push(&mut self, t_vec: Vec<f64>, r: f64, provenance: Provenance) -> Result<()> {
        self.solver.push(t_vec.clone(), r + self.margin)?;
        self.set.push(t_vec, r, provenance)
    }

    fn solve(&mut self) -> SolverStatus {
        self.status = self.solver.solve();
        self.status
    }

    fn finish(mut self, kind: AttackKind, started: Instant, passes: usize) -> (AttackResult, ConstraintSet) {
        if self.status == SolverStatus::Optimal {
            self.status = self.solver.solve();
        }
        let sol = self.solver.solution(self.status);
        let delta = if sol.status == SolverStatus::Optimal {
            sol.delta
        } else {
            vec![0.0; self.set.dim]
        };
        let min_slack = self.set.min_slack(&delta);
        let delta = Perturbation(delta);
        let result = AttackResult {
            kind,
            l2: delta.l2(),
            linf: delta.linf(),
            constraint_count: self.set.len(),
            status: sol.status,
            wall_time: started.elapsed().as_secs_f64(),
            constraint_rounds: self.set.provenance.iter().map(|p| p.round).collect(),
            constraint_log: self.set.provenance.clone(),
            passes,
            first_pass_constraints: self.first_pass.unwrap_or(self.set.len()),
            solver_iterations: sol.iterations,
            kkt: Some(sol.kkt),
            min_slack,
            delta,
        };
        (result, self.set)
    }
}

fn require_ucb(cfg: &AttackConfig, kind: AttackKind) -> Result<()> {
    if cfg.algo.algorithm != Algorithm::Ucb {
        return Err(Error::Config(format!(
            "the {kind} attack is defined for UCB; use the OSA attack for {}",
            cfg.algo.algorithm.name()
        )));
    }
    Ok(())
}

fn check_inputs(cfg: &AttackConfig, data: &LoggedDataset, model: &RewardModel) -> Result<()> {
    cfg.algo.validate(data.k())?;
    if model.input_dim() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.d(),
        });
    }
    data.check_horizon(cfg.algo.horizon)
}

/// Simulates the forced sequence `target` and constrains, at every
/// post-warm-up round, the target arm to outscore each arm in `rivals(t)`.
fn trajectory_attack(
    kind: AttackKind,
    cfg: &AttackConfig,
    data: &LoggedDataset,
    surrogate: &Surrogate,
    target: &TargetTrajectory,
    rivals: &dyn Fn(usize) -> Vec<usize>,
) -> Result<(AttackResult, ConstraintSet)> {
    let started = Instant::now();
    let k = data.k();
    let dim = surrogate.dim();
    let mut moments = Moments::new(k, dim);
    let mut acc = Accumulator::new(dim, cfg);
    for (i, &arm) in target.0.iter().enumerate() {
        let t = i + 1;
        if t > k {
            let (bw, pw) = moments.mean(arm);
            let cw = ucb_bonus(moments.counts[arm], t);
            for rival in rivals(arm) {
                let (bl, pl) = moments.mean(rival);
                let cl = ucb_bonus(moments.counts[rival], t);
                let (t_vec, r) = score_constraint((bw, &pw, cw), (bl, &pl, cl));
                acc.push(t_vec, r, Provenance { round: t, winner: arm, loser: rival })?;
            }
            if cfg.schedule == SolveSchedule::EveryRound && acc.solve() != SolverStatus::Optimal {
                debug!("{kind}: solver stopped at round {t} with {}", acc.status);
                break;
            }
        }
        moments.pull(surrogate, data, arm)?;
    }
    Ok(acc.finish(kind, started, 1))
}

/// Forces the UCB replay to follow `target` exactly.
pub fn full_trajectory_attack(
    cfg: &AttackConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    target: &TargetTrajectory,
) -> Result<AttackResult> {
    require_ucb(cfg, AttackKind::FullTrajectory)?;
    check_inputs(cfg, data, model)?;
    let k = data.k();
    if target.horizon() != cfg.algo.horizon {
        return Err(Error::InvalidArgument("target length differs from the horizon".into()));
    }
    target.validate(k, None)?;
    feasibility_check(model.free_dim(), k, cfg.algo.horizon);
    let rivals = move |arm: usize| (0..k).filter(|&a| a != arm).collect();
    with_relinearization(cfg, data, model, &Objective::Follow(target.clone()), |c, s| {
        trajectory_attack(AttackKind::FullTrajectory, c, data, s, target, &rivals)
    })
}

/// Keeps `optimal` from winning any post-warm-up UCB round, using a
/// round-robin auxiliary sequence over the other arms and `T − K` constraints.
///
/// The constraints only cover the auxiliary sequence's own history; a replay
/// whose pull counts drift away from it is not guaranteed to avoid `optimal`.
pub fn trajectory_free_attack(
    cfg: &AttackConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    optimal: usize,
) -> Result<AttackResult> {
    if optimal >= data.k() {
        return Err(Error::InvalidArgument(format!("optimal arm {optimal} out of range")));
    }
    let target = TargetTrajectory::round_robin(data.k(), cfg.algo.horizon, optimal);
    trajectory_free_attack_with(cfg, data, model, optimal, &target)
}

/// Trajectory-free attack along an explicit auxiliary trajectory, without refinement.
pub fn trajectory_free_attack_with(
    cfg: &AttackConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    optimal: usize,
    target: &TargetTrajectory,
) -> Result<AttackResult> {
    require_ucb(cfg, AttackKind::TrajectoryFree)?;
    check_inputs(cfg, data, model)?;
    let k = data.k();
    if optimal >= k {
        return Err(Error::InvalidArgument(format!("optimal arm {optimal} out of range")));
    }
    if target.horizon() != cfg.algo.horizon {
        return Err(Error::InvalidArgument("target length differs from the horizon".into()));
    }
    target.validate(k, Some(optimal))?;
    feasibility_check(model.free_dim(), k, cfg.algo.horizon);
    let rivals = move |_: usize| vec![optimal];
    with_relinearization(cfg, data, model, &Objective::Avoid(optimal), |c, s| {
        trajectory_attack(AttackKind::TrajectoryFree, c, data, s, target, &rivals)
    })
}

/// Online score-aware attack for UCB, ETC or ε-greedy.
///
/// The bandit is simulated under the current `δ`; whenever `optimal` would
/// win a decision round, the runner-up is constrained to beat it there, the
/// QP is re-solved (warm, incrementally) and the pass continues under the new
/// `δ`. Later constraints can disturb earlier rounds, so passes repeat until
/// one adds nothing; that last pass is an exact replay of the final `δ`.
pub fn osa_attack(
    cfg: &AttackConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    optimal: usize,
) -> Result<AttackResult> {
    check_inputs(cfg, data, model)?;
    if optimal >= data.k() {
        return Err(Error::InvalidArgument(format!("optimal arm {optimal} out of range")));
    }
    with_relinearization(cfg, data, model, &Objective::Avoid(optimal), |c, s| {
        osa_with_surrogate(c, data, s, optimal)
    })
}

fn osa_with_surrogate(
    cfg: &AttackConfig,
    data: &LoggedDataset,
    surrogate: &Surrogate,
    optimal: usize,
) -> Result<(AttackResult, ConstraintSet)> {
    let started = Instant::now();
    let k = data.k();
    let dim = surrogate.dim();
    let mut acc = Accumulator::new(dim, cfg);
    let mut delta = vec![0.0; dim];
    let mut passes = 0;
    'pass: loop {
        passes += 1;
        let mut added = false;
        let mut policy = Policy::new(&cfg.algo, k)?;
        let mut moments = Moments::new(k, dim);
        // per-arm reward sums under the current δ
        let mut sums = vec![0.0; k];
        for t in 1..=cfg.algo.horizon {
            let arm = match policy.step(t, &moments.counts) {
                Step::Pull { arm, .. } => arm,
                Step::Decide { bonus } => {
                    let mut scores = decision_scores(&sums, &moments.counts, &bonus);
                    if argmax(&scores) == optimal {
                        if acc.set.len() >= cfg.max_constraints {
                            acc.status = SolverStatus::IterationLimit;
                            break 'pass;
                        }
                        let mut masked = scores.clone();
                        masked[optimal] = f64::NEG_INFINITY;
                        let runner = argmax(&masked);
                        let (bw, pw) = moments.mean(runner);
                        let (bl, pl) = moments.mean(optimal);
                        let (t_vec, r) =
                            score_constraint((bw, &pw, bonus[runner]), (bl, &pl, bonus[optimal]));
                        acc.push(t_vec, r, Provenance { round: t, winner: runner, loser: optimal })?;
                        if acc.solve() != SolverStatus::Optimal {
                            break 'pass;
                        }
                        added = true;
                        delta = acc.solver.delta();
                        for (a, s) in sums.iter_mut().enumerate() {
                            *s = moments.base[a] + dot(&moments.feature[a], &delta);
                        }
                        scores = decision_scores(&sums, &moments.counts, &bonus);
                    }
                    let mut arm = argmax(&scores);
                    if arm == optimal {
                        // only reachable through rounding at the margin
                        scores[optimal] = f64::NEG_INFINITY;
                        arm = argmax(&scores);
                    }
                    policy.record_decision(arm);
                    arm
                }
            };
            let j = moments.counts[arm];
            let x = data.sample(arm, j);
            let (b, phi) = surrogate.base_and_feature(x)?;
            sums[arm] += b + dot(&phi, &delta);
            moments.add(arm, b, &phi);
        }
        acc.first_pass.get_or_insert(acc.set.len());
        if !added {
            break;
        }
    }
    Ok(acc.finish(AttackKind::Osa, started, passes))
}

/// Runs `attack` on the model's surrogate. For networks that miss the
/// objective under the true replay, re-centres the tangent expansion at
/// `θ + δ`, widens the margin to twice the worst surrogate error seen on the
/// logged samples, and attacks again, up to `cfg.relinearize` times.
fn with_relinearization<F>(
    cfg: &AttackConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    objective: &Objective,
    mut attack: F,
) -> Result<AttackResult>
where
    F: FnMut(&AttackConfig, &Surrogate) -> Result<(AttackResult, ConstraintSet)>,
{
    let started = Instant::now();
    let mut surrogate = Surrogate::for_model(model);
    let (mut result, _) = attack(cfg, &surrogate)?;
    let RewardModel::Mlp(mlp) = model else {
        return Ok(result);
    };
    let mut round_cfg = *cfg;
    let mut linearizations = 1;
    while linearizations <= cfg.relinearize && result.status == SolverStatus::Optimal {
        let (_, asr) = replay(&cfg.algo, data, model, &result.delta, objective)?;
        if asr >= 1.0 {
            break;
        }
        let perturbed = mlp.perturbed(&result.delta)?;
        let mut worst = 0.0f64;
        for arm in 0..data.k() {
            for j in 0..data.len(arm) {
                let x = data.sample(arm, j);
                let err = perturbed.forward(x)? - surrogate.value(x, &result.delta.0)?;
                worst = worst.max(err.abs());
            }
        }
        round_cfg.margin = round_cfg.margin.max(2.0 * worst);
        debug!("tangent attack replays at ASR {asr:.3}; re-linearizing with margin {:.2e}", round_cfg.margin);
        surrogate = Surrogate::Tangent { center: perturbed, shift: result.delta.0.clone() };
        result = attack(&round_cfg, &surrogate)?.0;
        linearizations += 1;
    }
    result.passes = result.passes.max(linearizations);
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Fraction of scored rounds meeting `objective`: matching `Ã_t` when
/// following a trajectory, not pulling the avoided arm otherwise. Scored
/// rounds are the data-dependent ones: post-warm-up UCB rounds, ETC's
/// commit phase and ε-greedy's greedy rounds. Returns 1 when none exist.
pub fn attack_success_rate(trace: &BanditTrace, objective: &Objective) -> f64 {
    let mut scored = 0usize;
    let mut hits = 0usize;
    for (i, (&arm, kind)) in trace.arms.iter().zip(&trace.kinds).enumerate() {
        if !kind.scored() {
            continue;
        }
        scored += 1;
        let ok = match objective {
            Objective::Follow(target) => target.0.get(i) == Some(&arm),
            Objective::Avoid(a) => arm != *a,
        };
        hits += ok as usize;
    }
    if scored == 0 {
        1.0
    } else {
        hits as f64 / scored as f64
    }
}

/// Replays the bandit under the true (perturbed) reward model and scores it.
pub fn replay(
    algo: &AlgoConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    delta: &Perturbation,
    objective: &Objective,
) -> Result<(BanditTrace, f64)> {
    let trace = run_bandit(algo, data, model, delta)?;
    let asr = attack_success_rate(&trace, objective);
    Ok((trace, asr))
}

/// Isotropic Gaussian direction scaled to `l2_target`.
pub fn random_noise_baseline(d_free: usize, l2_target: f64, seed: u64) -> Result<Perturbation> {
    if !l2_target.is_finite() || l2_target < 0.0 {
        return Err(Error::InvalidArgument(format!("noise norm {l2_target} must be finite and ≥ 0")));
    }
    if l2_target == 0.0 || d_free == 0 {
        return Ok(Perturbation::zeros(d_free));
    }
    let mut rng = rng_from_seed(seed);
    let mut v: Vec<f64> = (0..d_free).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scale = l2_target / dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
    Ok(Perturbation(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::LinearReward;

    #[test]
    fn linear_constraint_hand_example() {
        let w = [1.0, 0.0];
        let means = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (t_vec, r) = build_constraint_linear(&w, &means, &[1, 1], 3, 1, 0).unwrap();
        assert_eq!(t_vec, vec![-1.0, 1.0]);
        assert!((r - 1.0).abs() < 1e-15);
        let sol = crate::qp::solve_min_norm(
            &QpProblem::from_strict(2, vec![t_vec], &[r], DEFAULT_MARGIN).unwrap(),
            None,
        )
        .unwrap();
        let expect = 0.5 + DEFAULT_MARGIN / 2.0;
        assert!((sol.delta[0] + expect).abs() < 1e-12 && (sol.delta[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pairs_rejected() {
        let means = vec![vec![0.0], vec![1.0]];
        assert!(build_constraint_linear(&[1.0], &means, &[1, 1], 3, 0, 0).is_err());
        assert!(matches!(
            build_constraint_linear(&[1.0], &means, &[0, 1], 3, 0, 1),
            Err(Error::ZeroCount { arm: 0 })
        ));
    }

    #[test]
    fn round_robin_targets() {
        let t = TargetTrajectory::round_robin(2, 6, 0);
        assert_eq!(t.0, vec![0, 1, 1, 1, 1, 1]);
        let t = TargetTrajectory::round_robin(3, 8, 1);
        assert_eq!(t.0, vec![0, 1, 2, 0, 2, 0, 2, 0]);
        assert!(t.validate(3, Some(1)).is_ok());
        assert!(TargetTrajectory(vec![1, 0, 2]).validate(3, None).is_err());
    }

    #[test]
    fn noise_has_exact_norm() {
        let z = random_noise_baseline(10, 0.0, 1).unwrap();
        assert!(z.0.iter().all(|&v| v == 0.0));
        let n = random_noise_baseline(1000, 2.5, 7).unwrap();
        assert!((n.l2() - 2.5).abs() < 1e-12);
        assert!(random_noise_baseline(3, -1.0, 0).is_err());
    }

    #[test]
    fn non_ucb_trajectory_attacks_rejected() {
        let suite = crate::data::make_arm_suite(2, 4, 0).unwrap();
        let data = crate::data::sample_logged_data(&suite, 20, 1).unwrap();
        let model = RewardModel::Linear(LinearReward::new(suite.w.clone()).unwrap());
        let mut cfg = AttackConfig::new(AlgoConfig::ucb(20));
        cfg.algo.algorithm = Algorithm::etc();
        assert!(matches!(
            trajectory_free_attack(&cfg, &data, &model, suite.optimal_arm),
            Err(Error::Config(_))
        ));
    }
}
