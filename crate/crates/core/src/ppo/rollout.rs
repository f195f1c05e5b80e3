use rayon::prelude::*;

use crate::coach::{policy_head, sample_action, AblationVariant, PolicyParams, ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use crate::config::Config;
use crate::env::{SoccerEnv, Termination};
use crate::error::{Error, Result};

/// Per-world seed derived from the master seed (SplitMix64 finaliser).
pub fn world_seed(master: u64, world: usize) -> u64 {
    let mut z = master ^ (world as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Summary of one episode that finished during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episode_id: u64,
    pub ret: f64,
    pub length: usize,
    pub termination: Option<Termination>,
}

impl EpisodeSummary {
    pub fn success(&self) -> bool {
        self.termination == Some(Termination::Goal)
    }
}

/// One world that keeps its episode running across collection calls.
#[derive(Debug, Clone)]
pub struct RolloutWorker {
    world: usize,
    env: SoccerEnv,
    episode_counter: u32,
    episode_return: f64,
    episode_len: usize,
}

impl RolloutWorker {
    pub fn new(cfg: &Config, variant: AblationVariant, world: usize, seed: u64) -> Result<Self> {
        Ok(Self { world, env: SoccerEnv::new(cfg, variant, seed)?, episode_counter: 0, episode_return: 0.0, episode_len: 0 })
    }

    /// `n` workers seeded from `master` by world index.
    pub fn spawn(cfg: &Config, variant: AblationVariant, master: u64, n: usize) -> Result<Vec<Self>> {
        (0..n).map(|w| Self::new(cfg, variant, w, world_seed(master, w))).collect()
    }

    pub fn world(&self) -> usize {
        self.world
    }

    pub fn env(&self) -> &SoccerEnv {
        &self.env
    }

    pub fn set_randomization(&mut self, spec: &crate::world::RandomizationSpec) -> Result<()> {
        self.env.set_randomization(spec)
    }

    fn episode_id(&self) -> u64 {
        (self.world as u64) << 32 | self.episode_counter as u64
    }

    fn collect(&mut self, params: &PolicyParams, steps: usize, gamma: f64) -> Result<TransitionBatch> {
        let mut seg = TransitionBatch::with_capacity(steps);
        for _ in 0..steps {
            let obs = self.env.observe()?;
            let head = policy_head(&obs.actor_features, params);
            let action = sample_action(&head, self.env.rng_mut());
            let value = params.value(&obs.critic_features);
            let out = self.env.step(&action.raw)?;
            let mut reward = out.reward.total;
            if out.truncated {
                // the time limit is not part of the task state
                reward += gamma * params.value(&self.env.observe()?.critic_features);
            }
            if !reward.is_finite() || !value.is_finite() || !action.log_prob.is_finite() {
                return Err(Error::numeric("non-finite reward, value or log-prob during collection"));
            }
            seg.actor_obs.extend_from_slice(&obs.actor_features);
            seg.critic_obs.extend_from_slice(&obs.critic_features);
            seg.actions.extend_from_slice(&action.raw);
            seg.log_probs.push(action.log_prob);
            seg.rewards.push(reward);
            seg.values.push(value);
            seg.dones.push(out.episode_over());
            seg.episode_ids.push(self.episode_id());
            self.episode_return += out.reward.total;
            self.episode_len += 1;
            if out.episode_over() {
                seg.episodes.push(EpisodeSummary {
                    episode_id: self.episode_id(),
                    ret: self.episode_return,
                    length: self.episode_len,
                    termination: out.termination,
                });
                self.episode_counter = self.episode_counter.wrapping_add(1);
                self.episode_return = 0.0;
                self.episode_len = 0;
                self.env.reset()?;
            }
        }
        let bootstrap = if seg.dones.last().copied().unwrap_or(true) {
            0.0
        } else {
            params.value(&self.env.observe()?.critic_features)
        };
        seg.segment_lens.push(steps);
        seg.bootstrap_values.push(bootstrap);
        Ok(seg)
    }
}

/// Row-major transitions grouped into contiguous per-world segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBatch {
    pub actor_obs: Vec<f64>,
    pub critic_obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub episode_ids: Vec<u64>,
    pub segment_lens: Vec<usize>,
    /// Critic value after each segment's last step (0 if that step ended an episode).
    pub bootstrap_values: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

impl TransitionBatch {
    fn with_capacity(n: usize) -> Self {
        Self {
            actor_obs: Vec::with_capacity(n * ACTOR_OBS_DIM),
            critic_obs: Vec::with_capacity(n * CRITIC_OBS_DIM),
            actions: Vec::with_capacity(n * ACTION_DIM),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            episode_ids: Vec::with_capacity(n),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn append(&mut self, other: TransitionBatch) {
        self.actor_obs.extend(other.actor_obs);
        self.critic_obs.extend(other.critic_obs);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
        self.episode_ids.extend(other.episode_ids);
        self.segment_lens.extend(other.segment_lens);
        self.bootstrap_values.extend(other.bootstrap_values);
        self.episodes.extend(other.episodes);
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.len() as f64
    }

    /// Mean return of the episodes that finished in this batch, if any.
    pub fn mean_episode_return(&self) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        Some(self.episodes.iter().map(|e| e.ret).sum::<f64>() / self.episodes.len() as f64)
    }

    pub fn success_rate(&self) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        Some(self.episodes.iter().filter(|e| e.success()).count() as f64 / self.episodes.len() as f64)
    }
}

/// Steps every worker for `batch_size / workers.len()` decisions against one
/// parameter snapshot and concatenates the segments in world order.
pub fn collect_rollouts(workers: &mut [RolloutWorker], params: &PolicyParams, cfg: &Config) -> Result<TransitionBatch> {
    if workers.is_empty() {
        return Err(Error::config("collect_rollouts needs at least one world"));
    }
    if cfg.ppo.batch_size % workers.len() != 0 {
        return Err(Error::config("number of worlds must divide ppo.batch_size"));
    }
    let steps = cfg.ppo.batch_size / workers.len();
    let gamma = cfg.ppo.gamma;
    let segments: Vec<Result<TransitionBatch>> = workers
        .par_iter_mut()
        .map(|w| w.collect(params, steps, gamma).map_err(|e| Error::World { world: w.world, source: Box::new(e) }))
        .collect();
    let mut batch = TransitionBatch::with_capacity(cfg.ppo.batch_size);
    for seg in segments {
        batch.append(seg?);
    }
    Ok(batch)
}
