//! Oracles and randomized checks shared by several test targets.
#![allow(dead_code)]

use hierkick::coach::{policy_head, sample_action, PolicyParams, ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use hierkick::perception::{back_project, project, CameraCalib, Detection};
use hierkick::ppo::{gae_segment, normalize_advantages, ppo_loss, ppo_loss_and_grad, Minibatch, PpoConfig};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `A_t = sum_k (gamma lambda)^k delta_{t+k}`, truncated at the first done.
pub fn brute_force_gae(r: &[f64], v: &[f64], done: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value_after = |t: usize| if done[t] { 0.0 } else if t + 1 < n { v[t + 1] } else { last };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * (r[k] + gamma * value_after(k) - v[k]);
                if done[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Max |recursive - brute force| over `episodes` random segments of length 1..=32.
pub fn gae_max_error(episodes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..episodes {
        let n = rng.random_range(1..=32);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut done: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        if rng.random_bool(0.5) {
            done[n - 1] = true;
        }
        let last = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let out = gae_segment(&r, &v, &done, last, gamma, lambda).unwrap();
        let oracle = brute_force_gae(&r, &v, &done, last, gamma, lambda);
        for t in 0..n {
            worst = worst.max((out.advantages[t] - oracle[t]).abs());
            assert_eq!(out.returns[t], out.advantages[t] + v[t]);
        }
    }
    worst
}

pub struct Batch {
    pub actor_obs: Vec<f64>,
    pub critic_obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn view(&self) -> Minibatch<'_> {
        Minibatch {
            actor_obs: &self.actor_obs,
            critic_obs: &self.critic_obs,
            actions: &self.actions,
            old_log_probs: &self.old_log_probs,
            advantages: &self.advantages,
            returns: &self.returns,
        }
    }
}

/// Samples under `behaviour` so ratios against perturbed parameters land on
/// both sides of the clip range.
pub fn random_batch(behaviour: &PolicyParams, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let actor_obs: Vec<f64> = (0..n * ACTOR_OBS_DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
    let critic_obs: Vec<f64> = (0..n * CRITIC_OBS_DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut actions = Vec::new();
    let mut old_log_probs = Vec::new();
    for i in 0..n {
        let head = policy_head(&actor_obs[i * ACTOR_OBS_DIM..(i + 1) * ACTOR_OBS_DIM], behaviour);
        let a = sample_action(&head, rng);
        actions.extend(a.raw);
        old_log_probs.push(a.log_prob);
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    Batch {
        actor_obs,
        critic_obs,
        actions,
        old_log_probs,
        advantages: normalize_advantages(&raw),
        returns: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
    }
}

fn hidden(rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=5)).collect()
}

/// Central differences with step `h` on every parameter of `configs` random
/// tiny networks, compared by `|g - fd| / max(1, |g|, |fd|)`. Batches with a
/// ratio within 1e-3 of a clip edge are redrawn. Returns the worst error.
pub fn gradient_check(configs: usize, h: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    while done < configs {
        let behaviour = PolicyParams::new(&hidden(&mut rng), &hidden(&mut rng), rng.random_range(0.2..0.8), &mut rng);
        let mut params = behaviour.clone();
        let mut flat = params.flatten();
        for p in flat.iter_mut() {
            *p += rng.random_range(-0.15..0.15);
        }
        params.assign(&flat);
        let cfg = PpoConfig {
            clip_eps: rng.random_range(0.1..0.3),
            value_loss_coef: rng.random_range(0.1..1.0),
            entropy_coef: rng.random_range(0.0..0.05),
            ..Default::default()
        };
        let n = rng.random_range(4..=8);
        let batch = random_batch(&behaviour, n, &mut rng);
        let mb = batch.view();

        let on_kink = (0..n).any(|i| {
            let head = policy_head(&batch.actor_obs[i * ACTOR_OBS_DIM..(i + 1) * ACTOR_OBS_DIM], &params);
            let a: [f64; ACTION_DIM] = batch.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM].try_into().unwrap();
            let ratio = (head.log_prob(&a) - batch.old_log_probs[i]).exp();
            (ratio - (1.0 + cfg.clip_eps)).abs() < 1e-3 || (ratio - (1.0 - cfg.clip_eps)).abs() < 1e-3
        });
        if on_kink {
            continue;
        }

        let g = ppo_loss_and_grad(&params, &mb, &cfg).1.flatten();
        let base = params.flatten();
        let mut probe = params.clone();
        for k in 0..base.len() {
            let mut x = base.clone();
            x[k] = base[k] + h;
            probe.assign(&x);
            let up = ppo_loss(&probe, &mb, &cfg).total;
            x[k] = base[k] - h;
            probe.assign(&x);
            let down = ppo_loss(&probe, &mb, &cfg).total;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / 1f64.max(g[k].abs()).max(fd.abs()));
        }
        done += 1;
    }
    worst
}

pub fn random_calib(rng: &mut impl Rng) -> CameraCalib {
    let fx = rng.random_range(200.0..900.0);
    let fy = rng.random_range(200.0..900.0);
    let cx = rng.random_range(100.0..500.0);
    let cy = rng.random_range(100.0..400.0);
    let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
    let r = Rotation3::from_euler_angles(
        rng.random_range(-3.1..3.1),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.1..3.1),
    );
    let t = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.0..1.5));
    CameraCalib::new(k, *r.matrix(), t).unwrap()
}

/// A point inside the camera frustum, in the robot frame.
pub fn frustum_point(calib: &CameraCalib, rng: &mut impl Rng) -> Vector3<f64> {
    let depth = rng.random_range(0.1..8.0);
    let u = rng.random_range(0.0..640.0);
    let v = rng.random_range(0.0..480.0);
    let k = calib.intrinsics();
    let cam = Vector3::new((u - k[(0, 2)]) / k[(0, 0)] * depth, (v - k[(1, 2)]) / k[(1, 1)] * depth, depth);
    calib.rotation() * cam + calib.translation()
}

pub fn exact_detection(p: &Vector3<f64>, calib: &CameraCalib) -> Detection {
    let (x, y, depth) = project(p, calib).unwrap();
    Detection { pixel_x: x, pixel_y: y, depth, valid: true, timestamp: 0.0 }
}

/// Worst project-then-back-project error over `pairs` random calibrations and points.
pub fn camera_roundtrip_error(pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let calib = random_calib(&mut rng);
        let p = frustum_point(&calib, &mut rng);
        let back = back_project(&exact_detection(&p, &calib), &calib).unwrap();
        worst = worst.max((back - p).norm());
    }
    worst
}
