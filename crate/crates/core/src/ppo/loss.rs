//! Clipped-surrogate loss and its analytic gradient.
//!
//! total = -mean(min(rho A, clip(rho, 1-eps, 1+eps) A))
//!         + c_v * mean((V - R)^2) - c_e * H
//!
//! where the policy is a diagonal Gaussian with mean `tanh(actor(x))` and a
//! state-independent std `floor + exp(s)`.

use std::f64::consts::PI;

use crate::coach::{PolicyParams, ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM, STD_FLOOR};

use super::PpoConfig;

/// Borrowed view of one minibatch, all row-major.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub actor_obs: &'a [f64],
    pub critic_obs: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

impl Minibatch<'_> {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }

    fn check(&self) {
        let n = self.len();
        assert_eq!(self.actor_obs.len(), n * ACTOR_OBS_DIM);
        assert_eq!(self.critic_obs.len(), n * CRITIC_OBS_DIM);
        assert_eq!(self.actions.len(), n * ACTION_DIM);
        assert_eq!(self.advantages.len(), n);
        assert_eq!(self.returns.len(), n);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// Mean of `(rho - 1) - ln rho`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

struct Forward {
    stats: LossStats,
    actor_cache: crate::nn::ForwardCache,
    critic_cache: crate::nn::ForwardCache,
    means: Vec<f64>,
    ratios: Vec<f64>,
    unclipped_active: Vec<bool>,
    values: Vec<f64>,
}

fn forward(params: &PolicyParams, mb: &Minibatch<'_>, cfg: &PpoConfig) -> Forward {
    mb.check();
    let n = mb.len();
    let inv_n = 1.0 / n as f64;
    let actor_cache = params.actor.forward_batch(mb.actor_obs, n);
    let critic_cache = params.critic.forward_batch(mb.critic_obs, n);
    let std = params.action_std();
    let log_std = std.map(f64::ln);
    let log_norm: f64 = log_std.iter().sum::<f64>() + 0.5 * ACTION_DIM as f64 * (2.0 * PI).ln();

    let means: Vec<f64> = actor_cache.output().iter().map(|z| z.tanh()).collect();
    let values: Vec<f64> = critic_cache.output().to_vec();
    let mut ratios = Vec::with_capacity(n);
    let mut unclipped_active = Vec::with_capacity(n);
    let (mut policy, mut value, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..n {
        let mut quad = 0.0;
        for j in 0..ACTION_DIM {
            let d = (mb.actions[i * ACTION_DIM + j] - means[i * ACTION_DIM + j]) / std[j];
            quad += d * d;
        }
        let log_prob = -0.5 * quad - log_norm;
        let log_ratio = log_prob - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        let active = surr1 <= surr2;
        policy -= surr1.min(surr2);
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        let err = values[i] - mb.returns[i];
        value += err * err;
        ratios.push(ratio);
        unclipped_active.push(active);
    }
    policy *= inv_n;
    value *= inv_n;
    let entropy: f64 = log_std.iter().map(|l| l + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum();
    let total = policy + cfg.value_loss_coef * value - cfg.entropy_coef * entropy;
    Forward {
        stats: LossStats {
            total,
            policy,
            value,
            entropy,
            approx_kl: kl * inv_n,
            clip_fraction: clipped as f64 * inv_n,
        },
        actor_cache,
        critic_cache,
        means,
        ratios,
        unclipped_active,
        values,
    }
}

pub fn ppo_loss(params: &PolicyParams, mb: &Minibatch<'_>, cfg: &PpoConfig) -> LossStats {
    forward(params, mb, cfg).stats
}

/// Loss statistics and d(total)/d(params), shaped like `params`.
pub fn ppo_loss_and_grad(params: &PolicyParams, mb: &Minibatch<'_>, cfg: &PpoConfig) -> (LossStats, PolicyParams) {
    let fwd = forward(params, mb, cfg);
    let n = mb.len();
    let inv_n = 1.0 / n as f64;
    let std = params.action_std();
    let mut grads = params.zeros_like();

    let mut d_z = vec![0.0; n * ACTION_DIM];
    let mut d_log_std = [0.0; ACTION_DIM];
    for i in 0..n {
        if !fwd.unclipped_active[i] {
            continue;
        }
        // d total / d log pi for this sample
        let g = -mb.advantages[i] * fwd.ratios[i] * inv_n;
        for j in 0..ACTION_DIM {
            let mu = fwd.means[i * ACTION_DIM + j];
            let diff = mb.actions[i * ACTION_DIM + j] - mu;
            let var = std[j] * std[j];
            d_z[i * ACTION_DIM + j] = g * (diff / var) * (1.0 - mu * mu);
            d_log_std[j] += g * (diff * diff / var - 1.0);
        }
    }
    for j in 0..ACTION_DIM {
        // chain through log(floor + exp(s)); entropy contributes -c_e d log_std / d s
        let dls_ds = params.log_std[j].exp() / (STD_FLOOR + params.log_std[j].exp());
        grads.log_std[j] = (d_log_std[j] - cfg.entropy_coef) * dls_ds;
    }
    params.actor.backward_batch(&fwd.actor_cache, &d_z, &mut grads.actor);

    let d_v: Vec<f64> = (0..n)
        .map(|i| cfg.value_loss_coef * 2.0 * (fwd.values[i] - mb.returns[i]) * inv_n)
        .collect();
    params.critic.backward_batch(&fwd.critic_cache, &d_v, &mut grads.critic);
    (fwd.stats, grads)
}
