//! Multi-stage reward engine.
//!
//! Distance-based masks select exactly one of four stage rewards (approach,
//! alignment, dribble, shoot). A smoothness term on the command change and
//! a survival term apply globally. All vectors passed here must share one
//! frame; the environment uses the robot body frame.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::coach::{VelocityCommand, VelocityIncrement};
use crate::error::{Error, Result};
use crate::world::{FieldConfig, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseThresholds {
    /// Robot-ball "far" threshold, m.
    pub u1: f64,
    /// Robot-ball "close" threshold, m.
    pub u2: f64,
    /// Ball-goal shooting threshold, m.
    pub u3: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        Self { u1: 1.5, u2: 0.5, u3: 2.0 }
    }
}

impl PhaseThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.u2 && self.u2 < self.u1 && self.u3 > 0.0) {
            return Err(Error::config("rewards thresholds need 0 < u2 < u1 and u3 > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Weights for approach, alignment, dribble, shoot, delta.
    pub lambda: [f64; 5],
    pub beta: f64,
    pub mu: f64,
    pub v_max: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub delta_max: f64,
    pub delta_min: f64,
    pub survival_bonus: f64,
    /// Paid once on the decision during which the ball crosses the goal line.
    pub goal_bonus: f64,
    /// Proportional gain of the desired turn rate during alignment.
    pub align_kp: f64,
    /// Clamp on the desired turn rate, rad/s.
    pub align_rate_limit: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lambda: [0.3, 0.4, 4.0, 6.0, 1.0],
            beta: 0.5,
            mu: 0.5,
            v_max: 1.5,
            alpha: 2.0,
            epsilon: 1e-6,
            zeta1: 2.0,
            zeta2: 0.1,
            delta_max: 0.25,
            delta_min: 0.01,
            survival_bonus: 0.1,
            goal_bonus: 500.0,
            align_kp: 1.0,
            align_rate_limit: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::config("rewards.lambda must be non-negative"));
        }
        if !self.lambda[..4].windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::config("rewards.lambda[0..4] must be non-decreasing"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config("rewards.beta must be non-negative"));
        }
        for (name, v) in [
            ("mu", self.mu),
            ("v_max", self.v_max),
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
            ("zeta1", self.zeta1),
            ("zeta2", self.zeta2),
            ("align_kp", self.align_kp),
            ("align_rate_limit", self.align_rate_limit),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(format!("rewards.{name} must be positive")));
            }
        }
        if !(0.0 < self.delta_min && self.delta_min < self.delta_max) {
            return Err(Error::config("rewards need 0 < delta_min < delta_max"));
        }
        if !(self.survival_bonus >= 0.0 && self.goal_bonus >= 0.0) {
            return Err(Error::config("rewards bonuses must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Approach,
    Alignment,
    Dribble,
    Shoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseMasks {
    pub approach: bool,
    pub alignment: bool,
    pub dribble: bool,
    pub shoot: bool,
}

impl PhaseMasks {
    pub fn count(&self) -> usize {
        [self.approach, self.alignment, self.dribble, self.shoot].iter().filter(|m| **m).count()
    }

    pub fn active(&self) -> Option<Phase> {
        if self.approach {
            Some(Phase::Approach)
        } else if self.alignment {
            Some(Phase::Alignment)
        } else if self.dribble {
            Some(Phase::Dribble)
        } else if self.shoot {
            Some(Phase::Shoot)
        } else {
            None
        }
    }
}

/// `d_ball` is robot-ball distance, `d_goal` ball-goal distance. A ball-goal
/// distance exactly at `u3` counts as dribbling.
pub fn phase_masks(d_ball: f64, d_goal: f64, th: &PhaseThresholds) -> PhaseMasks {
    let close = 0.0 < d_ball && d_ball <= th.u2;
    PhaseMasks {
        approach: d_ball > th.u1,
        alignment: th.u2 < d_ball && d_ball <= th.u1,
        dribble: close && d_goal >= th.u3,
        shoot: close && d_goal < th.u3,
    }
}

fn gate(mask: bool, value: f64) -> f64 {
    if mask {
        value
    } else {
        0.0
    }
}

pub fn r_approach(v_cmd: &VelocityCommand, dir_ball: &Vector2<f64>, mask: bool) -> f64 {
    gate(mask, v_cmd.planar().dot(dir_ball))
}

pub fn r_alignment(theta_rbg: f64, dw_desired: f64, dw_actual: f64, beta: f64, mask: bool) -> f64 {
    gate(mask, theta_rbg.cos() - beta * (dw_desired - dw_actual).abs())
}

pub fn r_dribble(v_cmd: &VelocityCommand, dir_ball_goal: &Vector2<f64>, mask: bool) -> f64 {
    gate(mask, v_cmd.planar().dot(dir_ball_goal))
}

pub fn r_shoot(v_cmd: &VelocityCommand, dir_ball_goal: &Vector2<f64>, w: &RewardWeights, mask: bool) -> f64 {
    if !mask {
        return 0.0;
    }
    let v = v_cmd.planar();
    let speed = v.norm();
    let v_hat = v / (speed + w.epsilon);
    v_hat.dot(dir_ball_goal) + w.mu * w.v_max.min(speed * w.alpha)
}

pub fn r_delta(inc: &VelocityIncrement, w: &RewardWeights) -> f64 {
    let n = inc.norm();
    let trivial = if n < w.delta_min { 1.0 } else { 0.0 };
    -w.zeta1 * (n - w.delta_max).max(0.0) - w.zeta2 * trivial
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageRewards {
    pub approach: f64,
    pub alignment: f64,
    pub dribble: f64,
    pub shoot: f64,
    pub delta: f64,
}

impl StageRewards {
    pub fn as_array(&self) -> [f64; 5] {
        [self.approach, self.alignment, self.dribble, self.shoot, self.delta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_approach: f64,
    pub r_alignment: f64,
    pub r_dribble: f64,
    pub r_shoot: f64,
    pub r_delta: f64,
    pub r_survival: f64,
    pub r_goal: f64,
    pub active_phase: Option<Phase>,
    pub total: f64,
}

/// Weighted sum of the stage rewards plus the survival and goal terms.
pub fn total_reward(
    components: &StageRewards,
    active_phase: Option<Phase>,
    upright: bool,
    scored: bool,
    w: &RewardWeights,
) -> RewardBreakdown {
    let weighted: f64 = components.as_array().iter().zip(&w.lambda).map(|(r, l)| l * r).sum();
    let r_survival = if upright { 1.0 } else { 0.0 };
    let r_goal = if scored { 1.0 } else { 0.0 };
    RewardBreakdown {
        r_approach: components.approach,
        r_alignment: components.alignment,
        r_dribble: components.dribble,
        r_shoot: components.shoot,
        r_delta: components.delta,
        r_survival,
        r_goal,
        active_phase,
        total: weighted + w.survival_bonus * r_survival + w.goal_bonus * r_goal,
    }
}

/// Geometry the stage rewards need, in the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardGeometry {
    pub d_ball: f64,
    pub d_ball_goal: f64,
    pub dir_ball: Vector2<f64>,
    pub dir_goal: Vector2<f64>,
    pub dir_ball_goal: Vector2<f64>,
    /// Bearing of the ball relative to the robot heading.
    pub ball_bearing: f64,
}

impl RewardGeometry {
    pub fn from_state(state: &WorldState, field: &FieldConfig) -> Self {
        let goal = field.goal();
        let to_ball = state.to_body(state.ball_pos);
        let to_goal = state.to_body(goal);
        let ball_goal = to_goal - to_ball;
        let unit = |v: Vector2<f64>| {
            let n = v.norm();
            if n > 0.0 {
                v / n
            } else {
                Vector2::zeros()
            }
        };
        Self {
            d_ball: to_ball.norm(),
            d_ball_goal: ball_goal.norm(),
            dir_ball: unit(to_ball),
            dir_goal: unit(to_goal),
            dir_ball_goal: unit(ball_goal),
            ball_bearing: to_ball.y.atan2(to_ball.x),
        }
    }

    pub fn theta_rbg(&self) -> f64 {
        self.dir_ball.dot(&self.dir_goal).clamp(-1.0, 1.0).acos()
    }
}

/// Stage rewards for a decision taken in `geom` with the resulting command
/// and command change.
pub fn stage_rewards(
    geom: &RewardGeometry,
    command: &VelocityCommand,
    change: &VelocityIncrement,
    th: &PhaseThresholds,
    w: &RewardWeights,
) -> (StageRewards, PhaseMasks) {
    let masks = phase_masks(geom.d_ball, geom.d_ball_goal, th);
    let dw_desired = (w.align_kp * geom.ball_bearing).clamp(-w.align_rate_limit, w.align_rate_limit);
    let stages = StageRewards {
        approach: r_approach(command, &geom.dir_ball, masks.approach),
        alignment: r_alignment(geom.theta_rbg(), dw_desired, command.wz, w.beta, masks.alignment),
        dribble: r_dribble(command, &geom.dir_ball_goal, masks.dribble),
        shoot: r_shoot(command, &geom.dir_ball_goal, w, masks.shoot),
        delta: r_delta(change, w),
    };
    (stages, masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TOL: f64 = 1e-12;

    fn cmd(vx: f64, vy: f64) -> VelocityCommand {
        VelocityCommand::new(vx, vy, 0.0)
    }

    #[test]
    fn mask_boundaries() {
        let th = PhaseThresholds::default();
        let m = phase_masks(th.u1 + 0.01, 1.0, &th);
        assert!(m.approach && m.count() == 1);
        let m = phase_masks(th.u1, 1.0, &th);
        assert!(m.alignment && m.count() == 1);
        let m = phase_masks(th.u2, th.u3 - 0.01, &th);
        assert!(m.shoot && m.count() == 1);
        let m = phase_masks(th.u2, th.u3, &th);
        assert!(m.dribble && m.count() == 1);
        assert_eq!(phase_masks(0.0, 1.0, &th).count(), 0);
    }

    #[test]
    fn approach_examples() {
        assert!((r_approach(&cmd(1.0, 0.0), &Vector2::new(1.0, 0.0), true) - 1.0).abs() < TOL);
        assert!(r_approach(&cmd(1.0, 0.0), &Vector2::new(0.0, 1.0), true).abs() < TOL);
        assert!((r_approach(&cmd(0.6, 0.8), &Vector2::new(0.8, 0.6), true) - 0.96).abs() < TOL);
        assert_eq!(r_approach(&cmd(0.6, 0.8), &Vector2::new(0.8, 0.6), false), 0.0);
    }

    #[test]
    fn alignment_examples() {
        assert!((r_alignment(0.0, 0.2, 0.2, 0.5, true) - 1.0).abs() < TOL);
        assert!((r_alignment(PI, 0.0, 0.0, 0.5, true) + 1.0).abs() < TOL);
        assert!((r_alignment(PI / 3.0, 0.4, 0.1, 0.5, true) - 0.35).abs() < TOL);
        assert_eq!(r_alignment(0.0, 0.0, 0.0, 0.5, false), 0.0);
    }

    #[test]
    fn dribble_examples() {
        let dir = Vector2::new(0.6, -0.8);
        assert!((r_dribble(&cmd(0.3, -0.4), &dir, true) - 0.5).abs() < TOL);
        assert_eq!(r_dribble(&cmd(0.3, -0.4), &dir, false), 0.0);
    }

    #[test]
    fn shoot_examples() {
        let w = RewardWeights::default();
        assert_eq!(r_shoot(&cmd(0.0, 0.0), &Vector2::new(1.0, 0.0), &w, true), 0.0);
        let w = RewardWeights { mu: 0.5, alpha: 2.0, v_max: 1.5, epsilon: 1e-6, ..Default::default() };
        let got = r_shoot(&cmd(0.5, 0.0), &Vector2::new(1.0, 0.0), &w, true);
        let expected = 0.5 / (0.5 + 1e-6) + 0.5 * 1.0;
        assert!((got - expected).abs() < TOL);
        let fast = r_shoot(&cmd(1.2, 0.0), &Vector2::new(1.0, 0.0), &w, true);
        assert!((fast - (1.0 + w.mu * w.v_max)).abs() < 1e-5);
    }

    #[test]
    fn delta_examples() {
        let w = RewardWeights { zeta1: 2.0, ..Default::default() };
        let dead_band = VelocityIncrement { dvx: 0.1, dvy: 0.0, dwz: 0.0 };
        assert_eq!(r_delta(&dead_band, &w), 0.0);
        assert!((r_delta(&VelocityIncrement::default(), &w) + w.zeta2).abs() < TOL);
        let big = VelocityIncrement { dvx: w.delta_max + 0.05, dvy: 0.0, dwz: 0.0 };
        assert!((r_delta(&big, &w) + 0.1).abs() < TOL);
    }

    #[test]
    fn total_examples() {
        let w = RewardWeights { survival_bonus: 1.0, ..Default::default() };
        let b = total_reward(&StageRewards::default(), Some(Phase::Approach), true, false, &w);
        assert!((b.total - 1.0).abs() < TOL);
        let fallen = total_reward(&StageRewards::default(), Some(Phase::Approach), false, false, &w);
        assert_eq!(fallen.r_survival, 0.0);
        assert_eq!(fallen.total, 0.0);
    }

    #[test]
    fn weights_validation() {
        let w = RewardWeights { lambda: [2.0, 1.0, 2.0, 3.0, 1.0], ..Default::default() };
        assert!(w.validate().is_err());
        assert!(RewardWeights::default().validate().is_ok());
        assert!(PhaseThresholds { u1: 0.4, u2: 0.5, u3: 1.0 }.validate().is_err());
    }
}
