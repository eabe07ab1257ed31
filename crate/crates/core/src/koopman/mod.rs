//! Latent linear dynamics over early observation windows.
//!
//! A window of `k` days of the nine count observables is encoded to a
//! latent state `z`; a single matrix `A` advances it one day at a time; a
//! decoder maps latent states back to observables; two logistic heads read
//! the attack rate and outbreak probability off `z`.

mod data;
mod loss;
mod model;
mod train;

pub use data::{samples_from_trajectory, sweep_samples, synthetic_linear_samples, Sample};
pub use loss::{bce_with_logit, compute_loss, loss_and_grad, softplus, LossTerms};
pub use model::{sigmoid, Dense, Dims, KoopmanModel, LayerFile, Layout, LossWeights, ModelFile, MODEL_VERSION};
pub use train::{evaluate_koopman, forecast_mse_ratio, train, EpochStats, KoopmanConfig, KoopmanEval, TrainReport};
