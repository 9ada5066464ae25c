//! Adversarial weight-perturbation attacks on the reward models that drive
//! offline multi-armed-bandit replays: data generation, reward models, bandit
//! algorithms, constraint compilation, a minimum-norm QP solver and an
//! experiment harness.

pub mod attack;
pub mod bandit;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod qp;
pub mod reward;
pub mod rng;

pub use error::{Error, Result};
