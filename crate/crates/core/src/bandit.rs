//! Offline bandit replay: UCB, explore-then-commit and ε-greedy over a
//! logged dataset, scored by a (possibly perturbed) reward model.
//!
//! Rounds are numbered `t = 1..=T` and arms `0..K`. Every pull of arm `i`
//! consumes the next unread sample of that arm's log. The decision logic
//! lives in [`Policy`] so that attack simulations and replays share exactly
//! the same arithmetic.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::LoggedDataset;
use crate::error::{Error, Result};
use crate::linalg::argmax;
use crate::reward::{Perturbation, RewardModel};
use crate::rng::{rng_from_seed, Rng};

fn default_m() -> usize {
    5
}

fn default_eps0() -> f64 {
    0.1
}

fn default_eps_min() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    Ucb,
    /// Round-robin exploration with `m` pulls per arm, then commit.
    Etc {
        #[serde(default = "default_m")]
        m: usize,
    },
    /// `ε(t) = max(eps_min, eps0 / t)` after the warm-up.
    EpsilonGreedy {
        #[serde(default = "default_eps0")]
        eps0: f64,
        #[serde(default = "default_eps_min")]
        eps_min: f64,
    },
}

impl Algorithm {
    pub fn etc() -> Self {
        Algorithm::Etc { m: default_m() }
    }

    pub fn epsilon_greedy() -> Self {
        Algorithm::EpsilonGreedy {
            eps0: default_eps0(),
            eps_min: default_eps_min(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ucb => "ucb",
            Algorithm::Etc { .. } => "etc",
            Algorithm::EpsilonGreedy { .. } => "epsilon_greedy",
        }
    }

    /// Rounds before the first data-dependent decision.
    pub fn warmup(&self, k: usize) -> usize {
        match self {
            Algorithm::Etc { m } => m * k,
            _ => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub horizon: usize,
    /// Drives ε-greedy exploration; unused by the deterministic algorithms.
    #[serde(default)]
    pub seed: u64,
}

impl AlgoConfig {
    pub fn ucb(horizon: usize) -> Self {
        Self {
            algorithm: Algorithm::Ucb,
            horizon,
            seed: 0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if k < 2 {
            return Err(Error::Config(format!("need at least two arms, got {k}")));
        }
        match self.algorithm {
            Algorithm::Ucb => {}
            Algorithm::Etc { m } => {
                if m == 0 {
                    return Err(Error::Config("ETC needs m ≥ 1".into()));
                }
            }
            Algorithm::EpsilonGreedy { eps0, eps_min } => {
                if !(0.0..=1.0).contains(&eps0) || !(0.0..=1.0).contains(&eps_min) {
                    return Err(Error::Config("ε parameters must lie in [0, 1]".into()));
                }
            }
        }
        let need = self.algorithm.warmup(k);
        if self.horizon < need {
            return Err(Error::Config(format!(
                "horizon {} shorter than the {need} forced rounds of {}",
                self.horizon,
                self.algorithm.name()
            )));
        }
        Ok(())
    }
}

/// `mean + √(2 ln t / N)`.
pub fn ucb_score(mean_reward: f64, n: usize, t: usize) -> Result<f64> {
    if n == 0 || t < 2 {
        return Err(Error::ScoreDomain { n, t });
    }
    Ok(mean_reward + ucb_bonus(n, t))
}

#[inline]
pub(crate) fn ucb_bonus(n: usize, t: usize) -> f64 {
    (2.0 * (t as f64).ln() / n as f64).sqrt()
}

pub fn epsilon_schedule(t: usize, eps0: f64, eps_min: f64) -> f64 {
    eps_min.max(eps0 / t.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    /// Arm fixed by schedule: UCB/ε-greedy warm-up or ETC exploration.
    Forced,
    /// ε-greedy random exploration.
    Random,
    /// Argmax over scores.
    Decide,
    /// ETC exploitation after the commit decision.
    Committed,
}

impl RoundKind {
    /// Rounds counted by the attack success rate.
    pub fn scored(self) -> bool {
        matches!(self, RoundKind::Decide | RoundKind::Committed)
    }
}

/// What the policy does at one round.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Pull { arm: usize, kind: RoundKind },
    /// Pull the argmax of `mean_i + bonus_i`.
    Decide { bonus: Vec<f64> },
}

/// Per-algorithm decision state. Call [`Policy::step`] once per round and
/// [`Policy::record_decision`] after resolving a [`Step::Decide`].
#[derive(Debug, Clone)]
pub struct Policy {
    algorithm: Algorithm,
    k: usize,
    rng: Rng,
    committed: Option<usize>,
}

impl Policy {
    pub fn new(cfg: &AlgoConfig, k: usize) -> Result<Self> {
        cfg.validate(k)?;
        Ok(Self {
            algorithm: cfg.algorithm,
            k,
            rng: rng_from_seed(cfg.seed),
            committed: None,
        })
    }

    pub fn step(&mut self, t: usize, counts: &[usize]) -> Step {
        let k = self.k;
        match self.algorithm {
            Algorithm::Ucb => {
                if t <= k {
                    Step::Pull { arm: t - 1, kind: RoundKind::Forced }
                } else {
                    Step::Decide {
                        bonus: counts.iter().map(|&n| ucb_bonus(n, t)).collect(),
                    }
                }
            }
            Algorithm::Etc { m } => {
                if t <= m * k {
                    Step::Pull { arm: (t - 1) % k, kind: RoundKind::Forced }
                } else if let Some(arm) = self.committed {
                    Step::Pull { arm, kind: RoundKind::Committed }
                } else {
                    Step::Decide { bonus: vec![0.0; k] }
                }
            }
            Algorithm::EpsilonGreedy { eps0, eps_min } => {
                if t <= k {
                    return Step::Pull { arm: t - 1, kind: RoundKind::Forced };
                }
                // both draws happen every round so the stream never depends on rewards
                let u: f64 = self.rng.gen();
                let random_arm = self.rng.gen_range(0..k);
                if u < epsilon_schedule(t, eps0, eps_min) {
                    Step::Pull { arm: random_arm, kind: RoundKind::Random }
                } else {
                    Step::Decide { bonus: vec![0.0; k] }
                }
            }
        }
    }

    pub fn record_decision(&mut self, arm: usize) {
        if matches!(self.algorithm, Algorithm::Etc { .. }) {
            self.committed = Some(arm);
        }
    }
}

/// Scores `sum_i / N_i + bonus_i`.
pub fn decision_scores(sums: &[f64], counts: &[usize], bonus: &[f64]) -> Vec<f64> {
    sums.iter()
        .zip(counts)
        .zip(bonus)
        .map(|((s, &n), b)| s / n as f64 + b)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTrace {
    pub k: usize,
    /// Pulled arm per round (0-based), `arms[t-1]` for round `t`.
    pub arms: Vec<usize>,
    pub kinds: Vec<RoundKind>,
    /// Scores at decision rounds; NaN elsewhere.
    pub scores: Vec<Vec<f64>>,
    /// Counts after each round's pull.
    pub counts: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    /// Log index consumed by each pull.
    pub consumed: Vec<usize>,
    /// Final empirical mean reward per arm.
    pub means: Vec<f64>,
}

impl BanditTrace {
    pub fn horizon(&self) -> usize {
        self.arms.len()
    }

    pub fn final_counts(&self) -> Vec<usize> {
        self.counts.last().cloned().unwrap_or_else(|| vec![0; self.k])
    }

    /// CSV with columns `t, arm, score_1..score_K, N_1..N_K` (1-based arms).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "arm".to_string()];
        header.extend((1..=self.k).map(|i| format!("score_{i}")));
        header.extend((1..=self.k).map(|i| format!("N_{i}")));
        w.write_record(&header)?;
        for t in 0..self.arms.len() {
            let mut rec = vec![(t + 1).to_string(), (self.arms[t] + 1).to_string()];
            rec.extend(self.scores[t].iter().map(|s| {
                if s.is_nan() {
                    String::new()
                } else {
                    format!("{s:?}")
                }
            }));
            rec.extend(self.counts[t].iter().map(|n| n.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replays `cfg.algorithm` over `data` with rewards `r(X; δ)`.
pub fn run_bandit(
    cfg: &AlgoConfig,
    data: &LoggedDataset,
    model: &RewardModel,
    delta: &Perturbation,
) -> Result<BanditTrace> {
    if model.input_dim() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.d(),
        });
    }
    let perturbed = model.perturbed(delta)?;
    run_with_rewards(cfg, data, |arm, j| perturbed.eval(data.sample(arm, j)))
}

/// Core replay loop; `reward(arm, j)` scores the `j`-th logged sample of `arm`.
pub fn run_with_rewards<F>(cfg: &AlgoConfig, data: &LoggedDataset, mut reward: F) -> Result<BanditTrace>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    let k = data.k();
    let mut policy = Policy::new(cfg, k)?;
    let horizon = cfg.horizon;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k];
    let mut trace = BanditTrace {
        k,
        arms: Vec::with_capacity(horizon),
        kinds: Vec::with_capacity(horizon),
        scores: Vec::with_capacity(horizon),
        counts: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        consumed: Vec::with_capacity(horizon),
        means: Vec::new(),
    };
    for t in 1..=horizon {
        let (arm, kind, scores) = match policy.step(t, &counts) {
            Step::Pull { arm, kind } => (arm, kind, vec![f64::NAN; k]),
            Step::Decide { bonus } => {
                let scores = decision_scores(&sums, &counts, &bonus);
                let arm = argmax(&scores);
                policy.record_decision(arm);
                (arm, RoundKind::Decide, scores)
            }
        };
        let j = counts[arm];
        if j >= data.len(arm) {
            return Err(Error::LogExhausted {
                arm,
                available: data.len(arm),
                requested: j + 1,
            });
        }
        let r = reward(arm, j)?;
        counts[arm] += 1;
        sums[arm] += r;
        trace.arms.push(arm);
        trace.kinds.push(kind);
        trace.scores.push(scores);
        trace.counts.push(counts.clone());
        trace.rewards.push(r);
        trace.consumed.push(j);
    }
    trace.means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n == 0 { f64::NAN } else { s / n as f64 })
        .collect();
    Ok(trace)
}
