//! Scenario runner: per-seed pipelines, axis sweeps, the feasibility probe and
//! metric aggregation with CSV/JSON emission.
//!
//! A seed expands into independent streams (suite, log, model, defense, noise,
//! bandit) via [`derive_seed`], so every row is a pure function of
//! `(scenario, seed)` apart from its wall time.

use std::borrow::Cow;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    full_trajectory_attack, osa_attack, random_noise_baseline, replay, trajectory_free_attack,
    AttackConfig, AttackResult, Objective, TargetTrajectory,
};
use crate::bandit::{AlgoConfig, Algorithm};
use crate::data::{
    make_arm_suite, sample_logged_data, shuffle_defense, ArmSuite, DefenseConfig,
};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::qp::SolverStatus;
use crate::reward::{random_mlp, train_mlp, LinearReward, Perturbation, RewardModel, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackChoice {
    FullTrajectory,
    TrajectoryFree,
    Osa,
    Noise,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Linear,
    MlpTrained,
    MlpRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Dimension,
    NoiseNorm,
    Width,
    Horizon,
    DefenseFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

/// Seed list; configs may give either an explicit list or a `"a..b"` range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SeedSpec", into = "Vec<u64>")]
pub struct Seeds(pub Vec<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    List(Vec<u64>),
    Range(String),
}

impl TryFrom<SeedSpec> for Seeds {
    type Error = Error;

    fn try_from(spec: SeedSpec) -> Result<Self> {
        match spec {
            SeedSpec::List(v) => Ok(Seeds(v)),
            SeedSpec::Range(s) => parse_seed_range(&s).map(Seeds),
        }
    }
}

impl From<Seeds> for Vec<u64> {
    fn from(s: Seeds) -> Self {
        s.0
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds((0..50).collect())
    }
}

/// Parses a half-open range `a..b` (or a single seed `a`).
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seed range must look like `a..b`, got {s:?}"));
    let s = s.trim();
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b <= a {
                return Err(bad());
            }
            Ok((a..b).collect())
        }
        None => Ok(vec![s.parse().map_err(|_| bad())?]),
    }
}

fn default_algorithm() -> Algorithm {
    Algorithm::Ucb
}

fn default_attack_layer() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// One experiment configuration, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    pub k: usize,
    pub d: usize,
    pub horizon: usize,
    pub attack: AttackChoice,
    #[serde(default)]
    pub reward: RewardKind,
    /// Hidden-layer widths of network reward models.
    #[serde(default)]
    pub widths: Vec<usize>,
    /// Attackable hidden layer (1-based) of `mlp_random` models.
    #[serde(default = "default_attack_layer")]
    pub attack_layer: usize,
    #[serde(default)]
    pub defense_fraction: f64,
    /// ℓ₂ norm of the noise attack; a multiple of the seed's OSA norm when
    /// `noise_relative` holds.
    #[serde(default)]
    pub noise_norm: f64,
    #[serde(default = "default_true")]
    pub noise_relative: bool,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relinearize: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Scenario {
    /// A linear-reward UCB scenario over seeds `0..50`.
    pub fn new(name: &str, k: usize, d: usize, horizon: usize, attack: AttackChoice) -> Self {
        Self {
            name: name.into(),
            algorithm: Algorithm::Ucb,
            k,
            d,
            horizon,
            attack,
            reward: RewardKind::Linear,
            widths: Vec::new(),
            attack_layer: 1,
            defense_fraction: 0.0,
            noise_norm: 0.0,
            noise_relative: true,
            seeds: Seeds::default(),
            epochs: None,
            relinearize: None,
            sweep: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn algo_config(&self, seed: u64) -> AlgoConfig {
        AlgoConfig {
            algorithm: self.algorithm,
            horizon: self.horizon,
            seed: derive_seed(seed, Stream::Bandit),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("scenario {:?}: {msg}", self.name)));
        if self.k < 2 {
            return fail(format!("need at least 2 arms, got {}", self.k));
        }
        if self.d < self.k {
            return fail(format!("d = {} must be at least K = {}", self.d, self.k));
        }
        self.algo_config(0).validate(self.k)?;
        if self.algorithm != Algorithm::Ucb
            && matches!(self.attack, AttackChoice::FullTrajectory | AttackChoice::TrajectoryFree)
        {
            return fail(format!("{:?} attacks are defined for UCB only", self.attack));
        }
        if !(0.0..=1.0).contains(&self.defense_fraction) {
            return fail(format!("defense fraction {} outside [0, 1]", self.defense_fraction));
        }
        if !(self.noise_norm >= 0.0 && self.noise_norm.is_finite()) {
            return fail(format!("noise norm {} must be finite and nonnegative", self.noise_norm));
        }
        if self.seeds.0.is_empty() {
            return fail("empty seed list".into());
        }
        match self.reward {
            RewardKind::Linear => {}
            RewardKind::MlpTrained | RewardKind::MlpRandom if self.widths.is_empty() => {
                return fail("network rewards need at least one hidden width".into());
            }
            RewardKind::MlpRandom if !(1..=self.widths.len()).contains(&self.attack_layer) => {
                return fail(format!("attack layer {} is not a hidden layer", self.attack_layer));
            }
            _ => {}
        }
        if self.widths.contains(&0) {
            return fail("zero hidden width".into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return fail("empty sweep grid".into());
            }
            for &v in &sweep.grid {
                self.at(sweep.axis, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// This scenario with one axis set to `value`; the name records the point.
    pub fn at(&self, axis: SweepAxis, value: f64) -> Result<Scenario> {
        let mut s = self.clone();
        s.sweep = None;
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{axis:?} grid value {value} is not a positive integer")))
            }
        };
        let label = match axis {
            SweepAxis::Dimension => {
                s.d = count()?;
                "d"
            }
            SweepAxis::Horizon => {
                s.horizon = count()?;
                "T"
            }
            SweepAxis::Width => {
                let w = count()?;
                if s.widths.is_empty() {
                    s.widths.push(w);
                } else {
                    s.widths.iter_mut().for_each(|x| *x = w);
                }
                "W"
            }
            SweepAxis::NoiseNorm => {
                s.noise_norm = value;
                "noise"
            }
            SweepAxis::DefenseFraction => {
                s.defense_fraction = value;
                "defense"
            }
        };
        s.name = format!("{}@{label}={value}", self.name);
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    /// No QP was solved (no attack, or noise).
    Unsolved,
    Error,
}

impl From<SolverStatus> for RowStatus {
    fn from(s: SolverStatus) -> Self {
        match s {
            SolverStatus::Optimal => RowStatus::Optimal,
            SolverStatus::Infeasible => RowStatus::Infeasible,
            SolverStatus::IterationLimit => RowStatus::IterationLimit,
        }
    }
}

/// One seed's outcome. `wall_time` covers attack construction only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub seed: u64,
    pub asr: f64,
    pub success: bool,
    pub l2: f64,
    pub linf: f64,
    pub constraint_count: usize,
    pub status: RowStatus,
    pub wall_time: f64,
    pub error: String,
}

impl MetricsRow {
    fn failed(scenario: &str, seed: u64, err: &Error) -> Self {
        Self {
            scenario: scenario.into(),
            seed,
            asr: 0.0,
            success: false,
            l2: 0.0,
            linf: 0.0,
            constraint_count: 0,
            status: RowStatus::Error,
            wall_time: 0.0,
            error: err.to_string(),
        }
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(rows)
}

/// The attacked model for one seed.
pub fn build_model(s: &Scenario, suite: &ArmSuite, data: &crate::data::LoggedDataset, seed: u64) -> Result<RewardModel> {
    let model_seed = derive_seed(seed, Stream::Model);
    Ok(match s.reward {
        RewardKind::Linear => RewardModel::Linear(LinearReward::new(suite.w.clone())?),
        RewardKind::MlpTrained => {
            let mut cfg = TrainConfig {
                hidden: s.widths.clone(),
                seed: model_seed,
                ..Default::default()
            };
            if let Some(e) = s.epochs {
                cfg.epochs = e;
            }
            RewardModel::Mlp(train_mlp(data, suite, &cfg)?.model)
        }
        RewardKind::MlpRandom => {
            let mut widths = vec![s.d];
            widths.extend(&s.widths);
            widths.push(1);
            RewardModel::Mlp(random_mlp(&widths, s.attack_layer, model_seed)?)
        }
    })
}

fn attack_config(s: &Scenario, seed: u64) -> AttackConfig {
    let mut cfg = AttackConfig::new(s.algo_config(seed));
    if let Some(r) = s.relinearize {
        cfg.relinearize = r;
    }
    cfg
}

fn seed_row(s: &Scenario, seed: u64) -> Result<MetricsRow> {
    let suite = make_arm_suite(s.k, s.d, derive_seed(seed, Stream::Suite))?;
    let data = sample_logged_data(&suite, s.horizon, derive_seed(seed, Stream::Data))?;
    let model = build_model(s, &suite, &data, seed)?;
    let cfg = attack_config(s, seed);
    let optimal = suite.optimal_arm;
    let avoid = Objective::Avoid(optimal);

    let solved = |res: AttackResult| (res.delta.clone(), Some(res));
    let (objective, delta, result, wall_time) = match s.attack {
        AttackChoice::None => (avoid, Perturbation::zeros(model.free_dim()), None, 0.0),
        AttackChoice::Noise => {
            let started = Instant::now();
            let norm = if s.noise_relative {
                s.noise_norm * osa_attack(&cfg, &data, &model, optimal)?.l2
            } else {
                s.noise_norm
            };
            let delta = random_noise_baseline(model.free_dim(), norm, derive_seed(seed, Stream::Noise))?;
            (avoid, delta, None, started.elapsed().as_secs_f64())
        }
        AttackChoice::Osa => {
            let (delta, res) = solved(osa_attack(&cfg, &data, &model, optimal)?);
            let t = res.as_ref().map_or(0.0, |r| r.wall_time);
            (avoid, delta, res, t)
        }
        AttackChoice::TrajectoryFree => {
            let (delta, res) = solved(trajectory_free_attack(&cfg, &data, &model, optimal)?);
            let t = res.as_ref().map_or(0.0, |r| r.wall_time);
            (avoid, delta, res, t)
        }
        AttackChoice::FullTrajectory => {
            let target = TargetTrajectory::round_robin(s.k, s.horizon, optimal);
            let (delta, res) = solved(full_trajectory_attack(&cfg, &data, &model, &target)?);
            let t = res.as_ref().map_or(0.0, |r| r.wall_time);
            (Objective::Follow(target), delta, res, t)
        }
    };

    // the learner shuffles its copy of the log; the attacker saw the original
    let replay_data = if s.defense_fraction > 0.0 {
        let defense = DefenseConfig::new(s.defense_fraction, derive_seed(seed, Stream::Defense))?;
        Cow::Owned(shuffle_defense(&data, &defense))
    } else {
        Cow::Borrowed(&data)
    };
    let (_, asr) = replay(&cfg.algo, &replay_data, &model, &delta, &objective)?;
    Ok(MetricsRow {
        scenario: s.name.clone(),
        seed,
        asr,
        success: asr == 1.0,
        l2: delta.l2(),
        linf: delta.linf(),
        constraint_count: result.as_ref().map_or(0, |r| r.constraint_count),
        status: result.map_or(RowStatus::Unsolved, |r| r.status.into()),
        wall_time,
        error: String::new(),
    })
}

/// Runs every seed of `s` in parallel; failures become error rows.
pub fn run_scenario(s: &Scenario) -> Result<Vec<MetricsRow>> {
    s.validate()?;
    Ok(s.seeds
        .0
        .par_iter()
        .map(|&seed| {
            seed_row(s, seed).unwrap_or_else(|e| {
                log::warn!("{} seed {seed}: {e}", s.name);
                MetricsRow::failed(&s.name, seed, &e)
            })
        })
        .collect())
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean and standard error of a metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        let (mean, se) = mean_se(xs);
        Self { mean, se }
    }
}

/// Aggregate over the non-error rows of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seeds: usize,
    pub errors: usize,
    pub asr: Stat,
    pub success_fraction: f64,
    pub l2: Stat,
    pub linf: Stat,
    pub constraint_count: Stat,
    pub median_wall_time: f64,
}

/// One summary per scenario id, in order of first appearance.
pub fn summarize(rows: &[MetricsRow]) -> Vec<Summary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.scenario.as_str()) {
            names.push(&r.scenario);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&MetricsRow> = rows.iter().filter(|r| r.scenario == name).collect();
            let ok: Vec<&MetricsRow> = group.iter().copied().filter(|r| r.status != RowStatus::Error).collect();
            let col = |f: fn(&MetricsRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            Summary {
                scenario: name.into(),
                seeds: group.len(),
                errors: group.len() - ok.len(),
                asr: Stat::of(&col(|r| r.asr)),
                success_fraction: if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().filter(|r| r.success).count() as f64 / ok.len() as f64
                },
                l2: Stat::of(&col(|r| r.l2)),
                linf: Stat::of(&col(|r| r.linf)),
                constraint_count: Stat::of(&col(|r| r.constraint_count as f64)),
                median_wall_time: median(&col(|r| r.wall_time)),
            }
        })
        .collect()
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("line fit needs two or more paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("line fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LineFit { intercept: my - slope * mx, slope, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: Summary,
}

/// Rows and summaries of an axis sweep. `fit` is the log-log slope of the
/// mean ℓ₂ norm against `d` for dimension sweeps, and the mean constraint
/// count against `ln T` for horizon sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub fit: Option<LineFit>,
    #[serde(skip)]
    pub rows: Vec<MetricsRow>,
}

pub fn sweep(base: &Scenario, axis: SweepAxis, grid: &[f64]) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let scenarios = grid.iter().map(|&v| base.at(axis, v)).collect::<Result<Vec<_>>>()?;
    for s in &scenarios {
        s.validate()?;
    }
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (s, &value) in scenarios.iter().zip(grid) {
        let r = run_scenario(s)?;
        let summary = summarize(&r).remove(0);
        points.push(SweepPoint { value, summary });
        rows.extend(r);
    }
    let fit = match axis {
        SweepAxis::Dimension => {
            let xs: Vec<f64> = points.iter().map(|p| p.value.ln()).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.summary.l2.mean.ln()).collect();
            fit_line(&xs, &ys).ok().filter(|f| f.slope.is_finite())
        }
        SweepAxis::Horizon => {
            let xs: Vec<f64> = points.iter().map(|p| p.value.ln()).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.summary.constraint_count.mean).collect();
            fit_line(&xs, &ys).ok()
        }
        _ => None,
    };
    Ok(SweepTable { axis, points, fit, rows })
}

/// Feasible fraction of the full-trajectory QP at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityPoint {
    pub d: usize,
    /// `(T − K)(K − 1)`: the constraint count of the full-trajectory attack.
    pub threshold: usize,
    pub seeds: usize,
    pub feasible: usize,
    pub fraction: f64,
}

pub fn write_feasibility_csv<W: Write>(points: &[FeasibilityPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Arm suite for the probe. Below `d = K` orthonormal means do not exist, so
/// the means are independent random unit vectors with `w` the optimal mean.
fn probe_suite(k: usize, d: usize, seed: u64) -> Result<ArmSuite> {
    if d >= k {
        return make_arm_suite(k, d, seed);
    }
    if d == 0 {
        return Err(Error::DimensionTooSmall { d, required: 1 });
    }
    let mut rng = rng_from_seed(seed);
    let optimal_arm = rng.gen_range(0..k);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = norm2(&v);
            if n > 1e-8 {
                break v.iter().map(|x| x / n).collect();
            }
        })
        .collect();
    Ok(ArmSuite { k, d, w: means[optimal_arm].clone(), means, optimal_arm })
}

/// Solves the round-robin full-trajectory attack (UCB, linear reward) for
/// every `d` in `d_grid` and seed, recording how often the QP is feasible.
pub fn feasibility_probe(k: usize, horizon: usize, d_grid: &[usize], seeds: &[u64]) -> Result<Vec<FeasibilityPoint>> {
    if k < 2 || horizon < k {
        return Err(Error::Config(format!("feasibility probe needs K ≥ 2 and T ≥ K, got K = {k}, T = {horizon}")));
    }
    d_grid
        .iter()
        .map(|&d| {
            let feasible = seeds
                .par_iter()
                .map(|&seed| -> Result<bool> {
                    let suite = probe_suite(k, d, derive_seed(seed, Stream::Suite))?;
                    let data = sample_logged_data(&suite, horizon, derive_seed(seed, Stream::Data))?;
                    let model = RewardModel::Linear(LinearReward::new(suite.w.clone())?);
                    let target = TargetTrajectory::round_robin(k, horizon, suite.optimal_arm);
                    let cfg = AttackConfig::new(AlgoConfig::ucb(horizon));
                    let res = full_trajectory_attack(&cfg, &data, &model, &target)?;
                    Ok(res.status == SolverStatus::Optimal)
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&f| f)
                .count();
            Ok(FeasibilityPoint {
                d,
                threshold: (horizon - k) * (k - 1),
                seeds: seeds.len(),
                feasible,
                fraction: if seeds.is_empty() { 0.0 } else { feasible as f64 / seeds.len() as f64 },
            })
        })
        .collect()
}
