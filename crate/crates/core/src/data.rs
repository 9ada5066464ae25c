//! Synthetic arm suites, logged datasets and the shuffle defense.
//!
//! An [`ArmSuite`] holds K unit-norm arm means in ℝ^d together with the clean
//! linear reward weight `w`. The optimal arm's mean equals `w`; every other
//! mean is orthogonal to `w` and to each other, so the clean expected reward
//! is 1 for the optimal arm and 0 elsewhere.
//!
//! A [`LoggedDataset`] stores, per arm, the ordered samples the bandit
//! consumes: the j-th pull of arm i reads sample j of arm i.

use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSuite {
    pub k: usize,
    pub d: usize,
    pub means: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub optimal_arm: usize,
}

impl ArmSuite {
    pub fn mean(&self, arm: usize) -> &[f64] {
        &self.means[arm]
    }
}

fn gaussian_vector(rng: &mut impl rand::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Builds a K-arm suite in ℝ^d with orthonormal arm means.
///
/// Deterministic in `seed`. The optimal arm index is drawn uniformly so that
/// tie-breaking toward low indices does not systematically favor it.
pub fn make_arm_suite(k: usize, d: usize, seed: u64) -> Result<ArmSuite> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 arms, got {k}")));
    }
    if d < k {
        return Err(Error::DimensionTooSmall { d, required: k });
    }
    let mut rng = rng_from_seed(seed);
    let optimal_arm = rng.gen_range(0..k);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian_vector(&mut rng, d);
        // two Gram-Schmidt passes keep the residual overlap at rounding level
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                axpy(-c, b, &mut v);
            }
        }
        let n = norm2(&v);
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }

    let w = basis[0].clone();
    let mut others = basis.into_iter().skip(1);
    let means = (0..k)
        .map(|i| {
            if i == optimal_arm {
                w.clone()
            } else {
                others.next().expect("k basis vectors")
            }
        })
        .collect();
    Ok(ArmSuite {
        k,
        d,
        means,
        w,
        optimal_arm,
    })
}

/// Per-arm ordered sample logs, each arm stored as a row-major `n_i × d` block.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    d: usize,
    arms: Vec<Vec<f64>>,
}

impl LoggedDataset {
    pub fn from_blocks(d: usize, arms: Vec<Vec<f64>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        for block in &arms {
            if block.len() % d != 0 {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: block.len() % d,
                });
            }
        }
        Ok(Self { d, arms })
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self, arm: usize) -> usize {
        self.arms[arm].len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.arms.iter().all(|a| a.is_empty())
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k()).map(|i| self.len(i)).collect()
    }

    /// Sample `j` (0-based) of `arm`.
    pub fn sample(&self, arm: usize, j: usize) -> &[f64] {
        &self.arms[arm][j * self.d..(j + 1) * self.d]
    }

    pub fn block(&self, arm: usize) -> &[f64] {
        &self.arms[arm]
    }

    /// Checks that every arm can serve `horizon` pulls.
    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        for arm in 0..self.k() {
            if self.len(arm) < horizon {
                return Err(Error::LogExhausted {
                    arm,
                    available: self.len(arm),
                    requested: horizon,
                });
            }
        }
        Ok(())
    }

    /// Little-endian binary layout: `K`, `d`, `n_1..n_K` as u64, then the
    /// per-arm row-major f64 blocks.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.k() as u64).to_le_bytes())?;
        out.write_all(&(self.d as u64).to_le_bytes())?;
        for arm in 0..self.k() {
            out.write_all(&(self.len(arm) as u64).to_le_bytes())?;
        }
        for block in &self.arms {
            for v in block {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let k = next_u64(&mut input)? as usize;
        let d = next_u64(&mut input)? as usize;
        let sizes = (0..k)
            .map(|_| next_u64(&mut input).map(|n| n as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut arms = Vec::with_capacity(k);
        for n in sizes {
            let mut bytes = vec![0u8; n * d * 8];
            input.read_exact(&mut bytes)?;
            arms.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect(),
            );
        }
        Self::from_blocks(d, arms)
    }

    /// CSV layout: a header line `K,d,n_1,...,n_K`, then one line per sample
    /// (arm blocks in order), `d` comma-separated values each.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec![self.k().to_string(), self.d.to_string()];
        header.extend(self.sizes().iter().map(|n| n.to_string()));
        writeln!(out, "{}", header.join(","))?;
        for block in &self.arms {
            for row in block.chunks_exact(self.d) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("missing header".into()))??;
        let fields = header
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if fields.len() < 2 || fields.len() != 2 + fields[0] {
            return Err(Error::Format("header must be K,d,n_1..n_K".into()));
        }
        let d = fields[1];
        let mut arms = Vec::with_capacity(fields[0]);
        for &n in &fields[2..] {
            let mut block = Vec::with_capacity(n * d);
            for _ in 0..n {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Format("truncated sample block".into()))??;
                for v in line.split(',') {
                    block.push(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Format(format!("bad value {v:?}: {e}")))?,
                    );
                }
            }
            if block.len() != n * d {
                return Err(Error::Format("row width does not match d".into()));
            }
            arms.push(block);
        }
        Self::from_blocks(d, arms)
    }
}

/// Draws `n_per_arm` samples `X = μ_i + Z`, `Z ~ N(0, I)`, for every arm.
pub fn sample_logged_data(suite: &ArmSuite, n_per_arm: usize, seed: u64) -> Result<LoggedDataset> {
    if n_per_arm == 0 {
        return Err(Error::InvalidArgument("n_per_arm must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let d = suite.d;
    let arms = suite
        .means
        .iter()
        .map(|mu| {
            let mut block = Vec::with_capacity(n_per_arm * d);
            for _ in 0..n_per_arm {
                block.extend(mu.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
            }
            block
        })
        .collect();
    LoggedDataset::from_blocks(d, arms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    /// Portion of each arm's log (from the front) to permute, in [0, 1].
    pub fraction: f64,
    pub seed: u64,
}

impl DefenseConfig {
    pub fn new(fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "defense fraction must lie in [0, 1], got {fraction}"
            )));
        }
        Ok(Self { fraction, seed })
    }

    /// Number of leading entries shuffled in a log of length `n`.
    pub fn prefix_len(&self, n: usize) -> usize {
        ((self.fraction * n as f64).ceil() as usize).min(n)
    }
}

/// Uniformly permutes the first ⌈fraction·n_i⌉ samples of every arm.
pub fn shuffle_defense(data: &LoggedDataset, cfg: &DefenseConfig) -> LoggedDataset {
    let mut rng = rng_from_seed(cfg.seed);
    let d = data.d();
    let arms = (0..data.k())
        .map(|arm| {
            let n = data.len(arm);
            let m = cfg.prefix_len(n);
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            let mut block = Vec::with_capacity(n * d);
            for &j in &order {
                block.extend_from_slice(data.sample(arm, j));
            }
            block.extend_from_slice(&data.block(arm)[m * d..]);
            block
        })
        .collect();
    LoggedDataset { d, arms }
}
