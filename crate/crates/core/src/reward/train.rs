//! Supervised training of reward networks on logged data.
//!
//! Labels are the clean linear reward `y = Xᵀμ_{i*}`; the network is fit with
//! Adam on mean-squared error over an 80/20 train/validation split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ArmSuite, LoggedDataset};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::rng_from_seed;

use super::mlp::{backprop, forward_params, init_params, param_count, Activation, MlpReward};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1000],
            epochs: 100,
            batch_size: 1024,
            learning_rate: 1e-3,
            train_fraction: 0.8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedMlp {
    pub model: MlpReward,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Variance of the validation labels: the loss of the best constant predictor.
    pub val_label_variance: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

fn mse(widths: &[usize], params: &[f64], xs: &[&[f64]], ys: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = forward_params(widths, params, Activation::Relu, x) - y;
            e * e
        })
        .sum::<f64>()
        / xs.len() as f64
}

/// Trains a ReLU reward network on every sample of `data`.
///
/// All parameters are left attackable in the returned model.
pub fn train_mlp(data: &LoggedDataset, suite: &ArmSuite, cfg: &TrainConfig) -> Result<TrainedMlp> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.d() != suite.d {
        return Err(Error::DimensionMismatch {
            expected: suite.d,
            got: data.d(),
        });
    }
    if cfg.batch_size == 0 || !(0.0..=1.0).contains(&cfg.train_fraction) {
        return Err(Error::Config("batch size must be positive and train fraction in [0, 1]".into()));
    }
    let target = suite.mean(suite.optimal_arm);
    let mut samples: Vec<&[f64]> = (0..data.k())
        .flat_map(|arm| (0..data.len(arm)).map(move |j| data.sample(arm, j)))
        .collect();
    let mut rng = rng_from_seed(cfg.seed);
    samples.shuffle(&mut rng);
    let n_train = ((samples.len() as f64) * cfg.train_fraction).round() as usize;
    let (train_x, val_x) = samples.split_at(n_train);
    let train_y: Vec<f64> = train_x.iter().map(|x| dot(x, target)).collect();
    let val_y: Vec<f64> = val_x.iter().map(|x| dot(x, target)).collect();

    let mut widths = vec![data.d()];
    widths.extend(&cfg.hidden);
    widths.push(1);
    let n_params = param_count(&widths);
    let mut params = init_params(&widths, cfg.seed);

    let mut adam = Adam::new(n_params);
    let mut grad = vec![0.0; n_params];
    let mut sample_grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let out = backprop(&widths, &params, Activation::Relu, train_x[i], &mut sample_grad);
                crate::linalg::axpy(scale * (out - train_y[i]), &sample_grad, &mut grad);
            }
            adam.update(&mut params, &grad, cfg);
        }
    }

    let train_loss = mse(&widths, &params, train_x, &train_y);
    let val_loss = mse(&widths, &params, val_x, &val_y);
    let val_label_variance = if val_y.is_empty() {
        f64::NAN
    } else {
        let m = val_y.iter().sum::<f64>() / val_y.len() as f64;
        val_y.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / val_y.len() as f64
    };
    let model = MlpReward::new(widths, params, Activation::Relu, vec![true; n_params])?;
    Ok(TrainedMlp {
        model,
        train_loss,
        val_loss,
        val_label_variance,
    })
}
