//! Proximal policy optimisation with generalised advantage estimation and an
//! asymmetric (privileged-critic) actor-critic.

mod adam;
mod gae;
mod loss;
mod rollout;
mod trainer;

pub use adam::Adam;
pub use gae::{compute_gae, gae_segment, normalize_advantages, GaeOutput};
pub use loss::{ppo_loss, ppo_loss_and_grad, LossStats, Minibatch};
pub use rollout::{collect_rollouts, world_seed, RolloutWorker, TransitionBatch};
pub use trainer::{ppo_update, IterationMetrics, Trainer, UpdateStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub kl_target: f64,
    /// Epoch loop stops once the minibatch KL estimate exceeds this multiple
    /// of `kl_target`.
    pub kl_stop_factor: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub value_loss_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip applied separately to actor and critic;
    /// zero disables clipping.
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_episode_seconds: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            kl_target: 0.01,
            kl_stop_factor: 1.5,
            learning_rate: 3e-4,
            batch_size: 4096,
            minibatch_size: 1024,
            epochs: 5,
            value_loss_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_episode_seconds: 20.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("ppo.gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("ppo.gae_lambda must lie in [0, 1]"));
        }
        if !(self.clip_eps > 0.0 && self.kl_target > 0.0 && self.kl_stop_factor > 0.0) {
            return Err(Error::config("ppo.clip_eps, kl_target and kl_stop_factor must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("ppo.learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.minibatch_size == 0 || self.batch_size % self.minibatch_size != 0 {
            return Err(Error::config("ppo.minibatch_size must divide ppo.batch_size"));
        }
        if self.epochs == 0 {
            return Err(Error::config("ppo.epochs must be at least 1"));
        }
        if !(self.value_loss_coef >= 0.0 && self.entropy_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return Err(Error::config("ppo loss coefficients must be non-negative"));
        }
        if !(self.max_episode_seconds > 0.0) {
            return Err(Error::config("ppo.max_episode_seconds must be positive"));
        }
        Ok(())
    }
}
