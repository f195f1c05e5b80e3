//! Independent oracles for advantage estimation and the loss gradient.

mod common;

use common::{gae_max_error, gradient_check, random_batch};
use hierkick::coach::PolicyParams;
use hierkick::ppo::{gae_segment, ppo_loss_and_grad, PpoConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn gae_matches_exhaustive_sum() {
    let worst = gae_max_error(1000, 0x6AE);
    assert!(worst < 1e-10, "max |error| {worst:e}");
}

#[test]
fn gae_sixteen_step_episode() {
    let r: Vec<f64> = (0..16).map(|k| (k as f64 * 0.7).sin()).collect();
    let v: Vec<f64> = (0..16).map(|k| (k as f64 * 0.3).cos()).collect();
    let mut done = vec![false; 16];
    done[15] = true;
    let out = gae_segment(&r, &v, &done, 0.0, 0.99, 0.95).unwrap();
    let oracle = common::brute_force_gae(&r, &v, &done, 0.0, 0.99, 0.95);
    for t in 0..16 {
        assert!((out.advantages[t] - oracle[t]).abs() < 1e-10);
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let worst = gradient_check(120, 1e-6, 0x64AD);
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn gradient_check_covers_log_std_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = PolicyParams::new(&[2], &[2], 0.5, &mut rng);
    let batch = random_batch(&params, 4, &mut rng);
    let cfg = PpoConfig::default();
    let (_, g) = ppo_loss_and_grad(&params, &batch.view(), &cfg);
    assert!(g.log_std.iter().any(|v| v.abs() > 1e-8));
}
