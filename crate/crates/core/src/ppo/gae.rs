use crate::error::{Error, Result};

use super::{PpoConfig, TransitionBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct GaeOutput {
    /// Raw (unnormalised) advantages.
    pub advantages: Vec<f64>,
    /// `advantages + values`, the critic targets.
    pub returns: Vec<f64>,
}

/// GAE over one contiguous trajectory segment.
///
/// `dones[t]` marks that step `t` ended its episode; the recursion never
/// bootstraps across it. `last_value` is the critic estimate for the state
/// after the final step and is ignored when that step is terminal.
pub fn gae_segment(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<GaeOutput> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "gae: rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(GaeOutput { advantages, returns })
}

/// GAE over every per-world segment of a batch.
pub fn compute_gae(batch: &TransitionBatch, cfg: &PpoConfig) -> Result<GaeOutput> {
    let mut advantages = Vec::with_capacity(batch.len());
    let mut returns = Vec::with_capacity(batch.len());
    let mut start = 0;
    for (len, bootstrap) in batch.segment_lens.iter().zip(&batch.bootstrap_values) {
        let end = start + len;
        if end > batch.len() {
            return Err(Error::Shape("gae: segment lengths exceed batch".into()));
        }
        let seg = gae_segment(
            &batch.rewards[start..end],
            &batch.values[start..end],
            &batch.dones[start..end],
            *bootstrap,
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        advantages.extend(seg.advantages);
        returns.extend(seg.returns);
        start = end;
    }
    if start != batch.len() {
        return Err(Error::Shape("gae: segment lengths do not cover batch".into()));
    }
    Ok(GaeOutput { advantages, returns })
}

/// Shifts and scales to zero mean and unit (population) std.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return Vec::new();
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter().map(|a| (a - mean) / std).collect()
}
