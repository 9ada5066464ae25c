//! Reward models and their parameter perturbations.
//!
//! A [`Perturbation`] always lives in the model's *free* parameter space:
//! ℝ^d for a linear model, the unmasked entries of θ for a network.

mod mlp;
mod train;

pub use mlp::{param_count, random_mlp, Activation, MlpReward};
pub use train::{train_mlp, TrainConfig, TrainedMlp};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, norm_inf};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation(pub Vec<f64>);

impl Perturbation {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn linf(&self) -> f64 {
        norm_inf(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Perturbation {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `r(X) = wᵀX`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReward {
    pub w: Vec<f64>,
}

impl LinearReward {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        Ok(Self { w })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    Linear(LinearReward),
    Mlp(MlpReward),
}

impl RewardModel {
    pub fn input_dim(&self) -> usize {
        match self {
            RewardModel::Linear(m) => m.w.len(),
            RewardModel::Mlp(m) => m.input_dim(),
        }
    }

    /// Dimension of the perturbation space.
    pub fn free_dim(&self) -> usize {
        match self {
            RewardModel::Linear(m) => m.w.len(),
            RewardModel::Mlp(m) => m.free_count(),
        }
    }

    /// The model with `δ` folded into its parameters.
    pub fn perturbed(&self, delta: &Perturbation) -> Result<RewardModel> {
        match self {
            RewardModel::Linear(m) => {
                if delta.len() != m.w.len() {
                    return Err(Error::DimensionMismatch {
                        expected: m.w.len(),
                        got: delta.len(),
                    });
                }
                let w = m.w.iter().zip(delta.as_slice()).map(|(a, b)| a + b).collect();
                Ok(RewardModel::Linear(LinearReward::new(w)?))
            }
            RewardModel::Mlp(m) => Ok(RewardModel::Mlp(m.perturbed(delta)?)),
        }
    }

    /// Unperturbed reward of `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            RewardModel::Linear(m) => {
                if x.len() != m.w.len() {
                    return Err(Error::DimensionMismatch {
                        expected: m.w.len(),
                        got: x.len(),
                    });
                }
                Ok(dot(&m.w, x))
            }
            RewardModel::Mlp(m) => m.forward(x),
        }
    }
}

/// `r(X; δ)`: `(w+δ)ᵀX` for a linear model, `NN_{θ+δ}(X)` for a network.
pub fn eval_reward(model: &RewardModel, delta: &Perturbation, x: &[f64]) -> Result<f64> {
    match model {
        RewardModel::Linear(m) => {
            if delta.len() != m.w.len() || x.len() != m.w.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.w.len(),
                    got: if x.len() != m.w.len() { x.len() } else { delta.len() },
                });
            }
            Ok(m.w
                .iter()
                .zip(delta.as_slice())
                .zip(x)
                .map(|((w, d), x)| (w + d) * x)
                .sum())
        }
        RewardModel::Mlp(m) => m.perturbed(delta)?.forward(x),
    }
}

/// ∇_θ NN_θ(X) restricted to the attackable parameters.
pub fn param_gradient(model: &MlpReward, x: &[f64]) -> Result<Vec<f64>> {
    Ok(model.output_and_gradient(x)?.1)
}

/// `|NN_{θ+δ}(X) − NN_θ(X) − ∇_θNN_θ(X)ᵀδ|`.
pub fn linearization_error(model: &MlpReward, delta: &Perturbation, x: &[f64]) -> Result<f64> {
    let (base, grad) = model.output_and_gradient(x)?;
    let moved = model.perturbed(delta)?.forward(x)?;
    Ok((moved - base - dot(&grad, delta.as_slice())).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_arm_suite, sample_logged_data};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn dense_mlp(widths: &[usize], seed: u64) -> MlpReward {
        let mut rng = rng_from_seed(seed);
        let n = param_count(widths);
        MlpReward::new(
            widths.to_vec(),
            gaussian(&mut rng, n).into_iter().map(|v| 0.5 * v).collect(),
            Activation::Relu,
            vec![true; n],
        )
        .unwrap()
    }

    #[test]
    fn linear_reward_examples() {
        let m = RewardModel::Linear(LinearReward::new(vec![1.0, 0.0]).unwrap());
        assert_eq!(eval_reward(&m, &Perturbation::zeros(2), &[3.0, 4.0]).unwrap(), 3.0);
        let neg = Perturbation(vec![-1.0, 0.0]);
        assert_eq!(eval_reward(&m, &neg, &[3.0, 4.0]).unwrap(), 0.0);
        assert!(eval_reward(&m, &Perturbation::zeros(2), &[1.0]).is_err());
    }

    #[test]
    fn hand_forward_pass() {
        // d = 2, W1 = 2: weights all 1, biases 0, X = (1, 1) -> ReLU(2) + ReLU(2) = 4
        let widths = vec![2, 2, 1];
        let n = param_count(&widths);
        let mut params = vec![1.0; n];
        params[4] = 0.0;
        params[5] = 0.0;
        params[8] = 0.0;
        let m = MlpReward::new(widths, params, Activation::Relu, vec![true; n]).unwrap();
        let model = RewardModel::Mlp(m);
        assert_eq!(eval_reward(&model, &Perturbation::zeros(n), &[1.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn single_layer_gradient_is_input() {
        let m = MlpReward::new(vec![3, 1], vec![0.2, -0.1, 0.4, 0.0], Activation::Identity, vec![true; 4])
            .unwrap();
        let g = param_gradient(&m, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g, vec![1.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn dead_unit_has_zero_incoming_gradient() {
        // hidden unit 0 has a negative pre-activation for X = (1, 1)
        let widths = vec![2, 2, 1];
        let params = vec![-1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let m = MlpReward::new(widths, params, Activation::Relu, vec![true; 9]).unwrap();
        let g = param_gradient(&m, &[1.0, 1.0]).unwrap();
        assert_eq!(&g[0..2], &[0.0, 0.0]);
        assert_eq!(g[4], 0.0);
        assert_eq!(&g[2..4], &[1.0, 1.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rng_from_seed(11);
        let mut checked = 0;
        for trial in 0..100u64 {
            let m = dense_mlp(&[4, 6, 5, 1], 100 + trial);
            let x = gaussian(&mut rng, 4);
            if near_kink(&m, &x, 1e-3) {
                continue;
            }
            let g = param_gradient(&m, &x).unwrap();
            let eps = 1e-4;
            for k in 0..m.param_count() {
                let mut plus = vec![0.0; m.param_count()];
                plus[k] = eps;
                let mut minus = plus.clone();
                minus[k] = -eps;
                let fp = m.perturbed(&Perturbation(plus)).unwrap().forward(&x).unwrap();
                let fm = m.perturbed(&Perturbation(minus)).unwrap().forward(&x).unwrap();
                let fd = (fp - fm) / (2.0 * eps);
                assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()), "param {k}: {fd} vs {}", g[k]);
            }
            checked += 1;
        }
        assert!(checked > 50);
    }

    /// True when any hidden pre-activation, or its value after a ±1e-4 step
    /// in any single parameter, sits within `gap` of zero.
    pub(crate) fn near_kink(m: &MlpReward, x: &[f64], gap: f64) -> bool {
        let widths = m.widths();
        let p = m.params();
        let mut input = x.to_vec();
        let mut offset = 0;
        for l in 0..widths.len() - 2 {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let w = &p[offset..offset + fi * fo];
            let b = &p[offset + fi * fo..offset + fi * fo + fo];
            let z: Vec<f64> = (0..fo).map(|o| dot(&w[o * fi..(o + 1) * fi], &input) + b[o]).collect();
            if z.iter().any(|v| v.abs() < gap) {
                return true;
            }
            input = z.into_iter().map(|v| v.max(0.0)).collect();
            offset += fi * fo + fo;
        }
        false
    }

    #[test]
    fn linearization_error_zero_cases() {
        let m = dense_mlp(&[3, 8, 1], 5);
        let x = [0.3, -1.2, 0.7];
        assert_eq!(linearization_error(&m, &Perturbation::zeros(m.free_count()), &x).unwrap(), 0.0);

        // output layer weights and bias enter affinely
        let mut rng = rng_from_seed(3);
        let mut delta = vec![0.0; m.free_count()];
        let out_start = 3 * 8 + 8;
        for v in &mut delta[out_start..] {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let err = linearization_error(&m, &Perturbation(delta), &x).unwrap();
        assert!(err < 1e-12, "{err}");

        let lin = MlpReward::new(vec![3, 1], vec![0.1, 0.2, 0.3, 0.4], Activation::Identity, vec![true; 4])
            .unwrap();
        let err = linearization_error(&lin, &Perturbation(vec![1.0, -2.0, 3.0, 0.5]), &x).unwrap();
        assert!(err < 1e-12);
    }

    #[test]
    fn random_mlp_masks_one_layer() {
        let widths = [10, 30, 20, 1];
        let a = random_mlp(&widths, 2, 4).unwrap();
        let b = random_mlp(&widths, 2, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.free_count(), 30 * 20);
        assert_eq!(random_mlp(&widths, 1, 4).unwrap().free_count(), 10 * 30);
        assert!(random_mlp(&widths, 3, 4).is_err());
    }

    #[test]
    fn random_mlp_output_variance_is_finite_and_nonzero() {
        let m = random_mlp(&[20, 200, 1], 1, 9).unwrap();
        let mut rng = rng_from_seed(1);
        let outs: Vec<f64> = (0..1000).map(|_| m.forward(&gaussian(&mut rng, 20)).unwrap()).collect();
        let mean = outs.iter().sum::<f64>() / 1000.0;
        let var = outs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / 999.0;
        assert!(var.is_finite() && var > 1e-3 && var < 1e3, "{var}");
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let m = random_mlp(&[5, 7, 3, 1], 2, 1).unwrap();
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let back = MlpReward::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(back.params().iter().zip(m.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(MlpReward::read_checkpoint(&b"nope"[..]).is_err());
    }

    #[test]
    fn training_beats_constant_predictor() {
        let suite = make_arm_suite(3, 100, 1).unwrap();
        let data = sample_logged_data(&suite, 400, 2).unwrap();
        let cfg = TrainConfig {
            hidden: vec![1000],
            seed: 3,
            ..TrainConfig::default()
        };
        let trained = train_mlp(&data, &suite, &cfg).unwrap();
        assert!(
            trained.val_loss < trained.val_label_variance,
            "val {} vs var {}",
            trained.val_loss,
            trained.val_label_variance
        );
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let suite = make_arm_suite(2, 6, 1).unwrap();
        let data = sample_logged_data(&suite, 30, 2).unwrap();
        let cfg = TrainConfig {
            hidden: vec![8],
            epochs: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let untrained = train_mlp(&data, &suite, &cfg).unwrap();
        assert_eq!(untrained.model.params(), &mlp::init_params(&[6, 8, 1], 5)[..]);

        let cfg = TrainConfig { epochs: 3, ..cfg };
        let a = train_mlp(&data, &suite, &cfg).unwrap();
        let b = train_mlp(&data, &suite, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_ne!(a.model, untrained.model);
    }

    proptest! {
        #[test]
        fn linear_reward_is_affine_in_delta(
            w in prop::collection::vec(-3.0f64..3.0, 4),
            d1 in prop::collection::vec(-3.0f64..3.0, 4),
            d2 in prop::collection::vec(-3.0f64..3.0, 4),
            x in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let m = RewardModel::Linear(LinearReward::new(w).unwrap());
            let sum: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a + b).collect();
            let e = |d: &[f64]| eval_reward(&m, &Perturbation(d.to_vec()), &x).unwrap();
            let residual = e(&sum) - e(&d1) - e(&d2) + e(&[0.0; 4]);
            prop_assert!(residual.abs() < 1e-12);
        }
    }
}
