//! Kinematic stand-in for the pre-trained 50 Hz motion policy.
//!
//! The tracker follows the coach's velocity command with a first-order lag,
//! adds Gaussian tracking noise and clamps to the feasible envelope. Falls are
//! a thresholded hazard on planar speed.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coach::VelocityCommand;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// First-order lag time constant, seconds.
    pub time_constant: f64,
    pub tracking_noise_std: [f64; 3],
    /// Symmetric achievable envelope `[m/s, m/s, rad/s]`.
    pub max_feasible: [f64; 3],
    /// Planar speed above which falls become possible, m/s.
    pub fall_speed_threshold: f64,
    /// Fall rate while above threshold, 1/s.
    pub fall_hazard_rate: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            time_constant: 0.2,
            tracking_noise_std: [0.02, 0.02, 0.05],
            max_feasible: [1.2, 0.4, 1.0],
            fall_speed_threshold: 1.0,
            fall_hazard_rate: 0.5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_constant.is_finite() && self.time_constant > 0.0) {
            return Err(Error::config("tracker.time_constant must be positive"));
        }
        if self.tracking_noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("tracker.tracking_noise_std must be non-negative"));
        }
        if self.max_feasible.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::config("tracker.max_feasible must be positive"));
        }
        if !(self.fall_speed_threshold > 0.0) {
            return Err(Error::config("tracker.fall_speed_threshold must be positive"));
        }
        if !(self.fall_hazard_rate >= 0.0) {
            return Err(Error::config("tracker.fall_hazard_rate must be non-negative"));
        }
        Ok(())
    }
}

/// One low-level tracking step of length `dt`.
pub fn track(
    current_vel: Vector3<f64>,
    command: &VelocityCommand,
    cfg: &TrackerConfig,
    dt: f64,
    rng: &mut impl Rng,
) -> Vector3<f64> {
    let gain = dt / cfg.time_constant;
    let target = command.as_vector();
    let mut out = Vector3::zeros();
    for i in 0..3 {
        let limit = cfg.max_feasible[i];
        let clamped = target[i].clamp(-limit, limit);
        let mut v = current_vel[i] + (clamped - current_vel[i]) * gain;
        let std = cfg.tracking_noise_std[i];
        if std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            v += std * z;
        }
        out[i] = v.clamp(-limit, limit);
    }
    out
}

/// Returns true when the robot falls during this step.
pub fn fall_check(achieved_vel: Vector3<f64>, cfg: &TrackerConfig, dt: f64, rng: &mut impl Rng) -> bool {
    let planar_speed = achieved_vel.x.hypot(achieved_vel.y);
    if planar_speed <= cfg.fall_speed_threshold || cfg.fall_hazard_rate == 0.0 {
        return false;
    }
    rng.random::<f64>() < cfg.fall_hazard_rate * dt
}
