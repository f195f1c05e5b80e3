use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coach::{AblationVariant, PolicyParams, ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use crate::config::Config;
use crate::error::{Error, Result};

use super::{collect_rollouts, compute_gae, normalize_advantages, ppo_loss_and_grad, world_seed};
use super::{Adam, LossStats, Minibatch, PpoConfig, RolloutWorker, TransitionBatch};

const PARAM_STREAM: usize = usize::MAX;
const SHUFFLE_STREAM: usize = usize::MAX - 1;

/// Averages over the minibatch steps that were applied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatch_steps: usize,
    pub early_stopped: bool,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn clip_norm(v: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let n = l2(v);
    if n > max_norm {
        let s = max_norm / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Runs the epoch/minibatch loop on one batch. On a non-finite loss the
/// parameters and optimiser state are restored and an error is returned.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &TransitionBatch,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    let n = batch.len();
    if n % cfg.minibatch_size != 0 || n == 0 {
        return Err(Error::Shape(format!("batch of {n} does not split into minibatches of {}", cfg.minibatch_size)));
    }
    let gae = compute_gae(batch, cfg)?;
    let advantages = normalize_advantages(&gae.advantages);
    let saved = (params.clone(), adam.clone());

    let m = cfg.minibatch_size;
    let mut actor_obs = vec![0.0; m * ACTOR_OBS_DIM];
    let mut critic_obs = vec![0.0; m * CRITIC_OBS_DIM];
    let mut actions = vec![0.0; m * ACTION_DIM];
    let mut old_log_probs = vec![0.0; m];
    let mut adv = vec![0.0; m];
    let mut returns = vec![0.0; m];

    let n_actor = params.actor.num_params();
    let n_critic = params.critic.num_params();
    let kl_limit = cfg.kl_stop_factor * cfg.kl_target;
    let mut order: Vec<usize> = (0..n).collect();
    let mut sum = LossStats::default();
    let mut stats = UpdateStats::default();

    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(m) {
            for (k, &i) in chunk.iter().enumerate() {
                actor_obs[k * ACTOR_OBS_DIM..(k + 1) * ACTOR_OBS_DIM]
                    .copy_from_slice(&batch.actor_obs[i * ACTOR_OBS_DIM..(i + 1) * ACTOR_OBS_DIM]);
                critic_obs[k * CRITIC_OBS_DIM..(k + 1) * CRITIC_OBS_DIM]
                    .copy_from_slice(&batch.critic_obs[i * CRITIC_OBS_DIM..(i + 1) * CRITIC_OBS_DIM]);
                actions[k * ACTION_DIM..(k + 1) * ACTION_DIM]
                    .copy_from_slice(&batch.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
                old_log_probs[k] = batch.log_probs[i];
                adv[k] = advantages[i];
                returns[k] = gae.returns[i];
            }
            let mb = Minibatch {
                actor_obs: &actor_obs,
                critic_obs: &critic_obs,
                actions: &actions,
                old_log_probs: &old_log_probs,
                advantages: &adv,
                returns: &returns,
            };
            let (loss, grads) = ppo_loss_and_grad(params, &mb, cfg);
            if !loss.total.is_finite() {
                (*params, *adam) = saved;
                return Err(Error::numeric(format!(
                    "non-finite loss after {} minibatch steps (policy {}, value {}, entropy {}, kl {})",
                    stats.minibatch_steps, loss.policy, loss.value, loss.entropy, loss.approx_kl
                )));
            }
            if loss.approx_kl > kl_limit {
                stats.early_stopped = true;
                break 'epochs;
            }
            let mut g = grads.flatten();
            let (actor_g, rest) = g.split_at_mut(n_actor);
            let (critic_g, log_std_g) = rest.split_at_mut(n_critic);
            let actor_norm = (l2(actor_g).powi(2) + l2(log_std_g).powi(2)).sqrt();
            if cfg.max_grad_norm > 0.0 && actor_norm > cfg.max_grad_norm {
                let s = cfg.max_grad_norm / actor_norm;
                actor_g.iter_mut().chain(log_std_g.iter_mut()).for_each(|x| *x *= s);
            }
            clip_norm(critic_g, cfg.max_grad_norm);
            let mut flat = params.flatten();
            adam.apply(&mut flat, &g);
            params.assign(&flat);

            sum.policy += loss.policy;
            sum.value += loss.value;
            sum.entropy += loss.entropy;
            sum.approx_kl += loss.approx_kl;
            sum.clip_fraction += loss.clip_fraction;
            stats.minibatch_steps += 1;
        }
    }
    if let Some(bad) = params.flatten().iter().find(|v| !v.is_finite()) {
        let msg = format!("parameter became {bad} during update");
        (*params, *adam) = saved;
        return Err(Error::numeric(msg));
    }
    if stats.minibatch_steps > 0 {
        let k = stats.minibatch_steps as f64;
        stats.policy_loss = sum.policy / k;
        stats.value_loss = sum.value / k;
        stats.entropy = sum.entropy / k;
        stats.approx_kl = sum.approx_kl / k;
        stats.clip_fraction = sum.clip_fraction / k;
    }
    Ok(stats)
}

/// One line of the training metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Mean per-decision reward over the batch.
    pub mean_reward: f64,
    /// Mean return of episodes finished during this batch.
    pub mean_episode_return: Option<f64>,
    pub success_rate: Option<f64>,
    pub episodes: usize,
    pub approx_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatch_steps: usize,
    pub early_stopped: bool,
    pub action_std: [f64; 3],
}

/// Owns the worlds, parameters and optimiser for one training run.
pub struct Trainer {
    cfg: Config,
    variant: AblationVariant,
    params: PolicyParams,
    adam: Adam,
    workers: Vec<RolloutWorker>,
    shuffle_rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(cfg: &Config, variant: AblationVariant, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(world_seed(seed, PARAM_STREAM));
        let params = PolicyParams::new(&cfg.coach.actor_hidden, &cfg.coach.critic_hidden, cfg.coach.init_std, &mut init_rng);
        let p = &cfg.ppo;
        let adam = Adam::new(params.num_params(), p.learning_rate, p.adam_beta1, p.adam_beta2, p.adam_eps);
        Ok(Self {
            cfg: cfg.clone(),
            variant,
            params,
            adam,
            workers: RolloutWorker::spawn(
                &Config { randomization: cfg.randomization_at(0), ..cfg.clone() },
                variant,
                seed,
                cfg.training.n_worlds,
            )?,
            shuffle_rng: ChaCha8Rng::seed_from_u64(world_seed(seed, SHUFFLE_STREAM)),
            iteration: 0,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn variant(&self) -> AblationVariant {
        self.variant
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Collects one batch and updates on it.
    pub fn step(&mut self) -> Result<IterationMetrics> {
        if self.cfg.training.curriculum.is_some() {
            let spec = self.cfg.randomization_at(self.iteration);
            for w in &mut self.workers {
                w.set_randomization(&spec)?;
            }
        }
        let batch = collect_rollouts(&mut self.workers, &self.params, &self.cfg)?;
        let upd = ppo_update(&mut self.params, &mut self.adam, &batch, &self.cfg.ppo, &mut self.shuffle_rng)?;
        self.iteration += 1;
        Ok(IterationMetrics {
            iteration: self.iteration,
            mean_reward: batch.mean_reward(),
            mean_episode_return: batch.mean_episode_return(),
            success_rate: batch.success_rate(),
            episodes: batch.episodes.len(),
            approx_kl: upd.approx_kl,
            policy_loss: upd.policy_loss,
            value_loss: upd.value_loss,
            entropy: upd.entropy,
            clip_fraction: upd.clip_fraction,
            minibatch_steps: upd.minibatch_steps,
            early_stopped: upd.early_stopped,
            action_std: self.params.action_std(),
        })
    }

    pub fn checkpoint(&self) -> crate::checkpoint::Checkpoint {
        crate::checkpoint::Checkpoint {
            variant: self.variant,
            iteration: self.iteration as u64,
            params: self.params.clone(),
            adam: self.adam.clone(),
        }
    }
}
