//! High-level coach: observation assembly, bounded velocity increments,
//! command integration and the Gaussian actor/critic networks.
//!
//! The policy distribution lives in a normalised action space where every
//! dimension spans `[-1, 1]`. For the hierarchical variants a normalised
//! action maps to a velocity increment by the per-dimension increment
//! bounds; the end-to-end baseline maps it directly onto the command
//! envelope.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::world::WorldState;

/// Coach decision period in low-level steps (5 Hz over 50 Hz).
pub const DECISION_INTERVAL: usize = 10;
/// Per-decision increment bounds `[dvx, dvy, dwz]`.
pub const INCREMENT_BOUNDS: [f64; 3] = [0.2, 0.1, 0.1];
pub const ACTION_DIM: usize = 3;
pub const ACTOR_OBS_DIM: usize = 12;
/// Actor slots plus ball velocity (2), accumulated command (3) and elapsed
/// episode fraction (1).
pub const CRITIC_OBS_DIM: usize = ACTOR_OBS_DIM + 6;
/// Minimum action std in normalised units (1% of each bound).
pub const STD_FLOOR: f64 = 0.01;

const POSITION_SCALE: f64 = 3.0;
const ROBOT_VEL_SCALE: [f64; 3] = [1.2, 0.4, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoDistances,
    ReplaceCprev,
    EndToEnd,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] =
        [AblationVariant::Full, AblationVariant::NoDistances, AblationVariant::ReplaceCprev, AblationVariant::EndToEnd];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoDistances => "no_distances",
            AblationVariant::ReplaceCprev => "replace_cprev",
            AblationVariant::EndToEnd => "end_to_end",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            AblationVariant::Full => 0,
            AblationVariant::NoDistances => 1,
            AblationVariant::ReplaceCprev => 2,
            AblationVariant::EndToEnd => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }

    /// Whether actions are increments integrated into the command.
    pub fn is_incremental(self) -> bool {
        self != AblationVariant::EndToEnd
    }

    fn command_slot_scale(self) -> [f64; 3] {
        match self {
            AblationVariant::Full | AblationVariant::NoDistances => INCREMENT_BOUNDS,
            AblationVariant::ReplaceCprev => [1.0, 1.0, 1.0],
            AblationVariant::EndToEnd => ROBOT_VEL_SCALE,
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityIncrement {
    pub dvx: f64,
    pub dvy: f64,
    pub dwz: f64,
}

impl VelocityIncrement {
    /// Builds an increment, clamping every component to its bound.
    pub fn clamped(dvx: f64, dvy: f64, dwz: f64) -> Self {
        let [bx, by, bw] = INCREMENT_BOUNDS;
        Self { dvx: dvx.clamp(-bx, bx), dvy: dvy.clamp(-by, by), dwz: dwz.clamp(-bw, bw) }
    }

    /// Maps a normalised action onto the bounded increment box.
    pub fn from_normalized(a: &[f64; 3]) -> Self {
        let [bx, by, bw] = INCREMENT_BOUNDS;
        Self { dvx: a[0].clamp(-1.0, 1.0) * bx, dvy: a[1].clamp(-1.0, 1.0) * by, dwz: a[2].clamp(-1.0, 1.0) * bw }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.dvx, self.dvy, self.dwz)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn within_bounds(&self) -> bool {
        let [bx, by, bw] = INCREMENT_BOUNDS;
        self.dvx.abs() <= bx && self.dvy.abs() <= by && self.dwz.abs() <= bw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl VelocityCommand {
    pub fn new(vx: f64, vy: f64, wz: f64) -> Self {
        Self { vx, vy, wz }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.wz)
    }

    pub fn planar(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    /// Difference to an earlier command, as an (unclamped) increment.
    pub fn delta_from(&self, prev: &VelocityCommand) -> VelocityIncrement {
        VelocityIncrement { dvx: self.vx - prev.vx, dvy: self.vy - prev.vy, dwz: self.wz - prev.wz }
    }
}

/// Componentwise bounds of the accumulated command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandEnvelope {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for CommandEnvelope {
    fn default() -> Self {
        Self { min: [-0.6, -0.4, -1.0], max: [1.2, 0.4, 1.0] }
    }
}

impl CommandEnvelope {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i] < 0.0 && self.max[i] > 0.0) {
                return Err(Error::config("coach.envelope must straddle zero in every dimension"));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, v: Vector3<f64>) -> VelocityCommand {
        VelocityCommand::new(
            v.x.clamp(self.min[0], self.max[0]),
            v.y.clamp(self.min[1], self.max[1]),
            v.z.clamp(self.min[2], self.max[2]),
        )
    }

    pub fn contains(&self, c: &VelocityCommand) -> bool {
        let v = c.as_vector();
        (0..3).all(|i| v[i] >= self.min[i] && v[i] <= self.max[i])
    }

    /// Absolute command for the end-to-end head: positive normalised values
    /// scale to `max`, negative ones to `|min|`, so zero maps to rest.
    pub fn command_from_normalized(&self, a: &[f64; 3]) -> VelocityCommand {
        let mut out = [0.0; 3];
        for i in 0..3 {
            let x = a[i].clamp(-1.0, 1.0);
            out[i] = if x >= 0.0 { x * self.max[i] } else { -x * self.min[i] };
        }
        VelocityCommand::new(out[0], out[1], out[2])
    }
}

/// `v_cmd(t) = v_cmd(t-1) + dv(t)`, clamped to the envelope.
pub fn integrate_command(prev: &VelocityCommand, inc: &VelocityIncrement, envelope: &CommandEnvelope) -> VelocityCommand {
    envelope.clamp(prev.as_vector() + inc.as_vector())
}

/// Coach observation. Relative vectors are in the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighLevelObs {
    pub p_robot_ball: Vector2<f64>,
    pub p_robot_goal: Vector2<f64>,
    pub d_ball: f64,
    pub d_goal: f64,
    pub v_robot: Vector3<f64>,
    /// Previous increment, or the robot-ball velocity for `ReplaceCprev`.
    pub c_prev: Vector3<f64>,
}

impl HighLevelObs {
    /// Scaled network input.
    pub fn features(&self, variant: AblationVariant) -> [f64; ACTOR_OBS_DIM] {
        let cs = variant.command_slot_scale();
        [
            self.p_robot_ball.x / POSITION_SCALE,
            self.p_robot_ball.y / POSITION_SCALE,
            self.p_robot_goal.x / POSITION_SCALE,
            self.p_robot_goal.y / POSITION_SCALE,
            self.d_ball / POSITION_SCALE,
            self.d_goal / POSITION_SCALE,
            self.v_robot.x / ROBOT_VEL_SCALE[0],
            self.v_robot.y / ROBOT_VEL_SCALE[1],
            self.v_robot.z / ROBOT_VEL_SCALE[2],
            self.c_prev.x / cs[0],
            self.c_prev.y / cs[1],
            self.c_prev.z / cs[2],
        ]
    }

    fn is_finite(&self) -> bool {
        self.p_robot_ball.iter().chain(self.p_robot_goal.iter()).all(|v| v.is_finite())
            && self.d_ball.is_finite()
            && self.d_goal.is_finite()
            && self.v_robot.iter().chain(self.c_prev.iter()).all(|v| v.is_finite())
    }
}

/// Assembles the coach observation from robot-frame estimates.
///
/// `ball_rate` is the robot-frame rate of change of the ball position; it is
/// only used by `ReplaceCprev`, which puts it where `c_prev` normally goes.
pub fn build_obs(
    state: &WorldState,
    ball_est: &Vector3<f64>,
    goal_est: &Vector2<f64>,
    c_prev: &Vector3<f64>,
    ball_rate: &Vector2<f64>,
    variant: AblationVariant,
) -> Result<HighLevelObs> {
    let p_robot_ball = Vector2::new(ball_est.x, ball_est.y);
    let p_robot_goal = *goal_est;
    let (d_ball, d_goal) = match variant {
        AblationVariant::NoDistances => (0.0, 0.0),
        _ => (p_robot_ball.norm(), p_robot_goal.norm()),
    };
    let c_slot = match variant {
        AblationVariant::ReplaceCprev => Vector3::new(ball_rate.x, ball_rate.y, 0.0),
        _ => *c_prev,
    };
    let obs = HighLevelObs { p_robot_ball, p_robot_goal, d_ball, d_goal, v_robot: state.robot_vel, c_prev: c_slot };
    if !obs.is_finite() {
        return Err(Error::numeric("build_obs: non-finite estimate"));
    }
    Ok(obs)
}

/// Privileged critic input: the ground-truth observation plus quantities
/// the actor never sees.
pub fn critic_features(
    truth: &HighLevelObs,
    variant: AblationVariant,
    ball_vel_body: &Vector2<f64>,
    command: &VelocityCommand,
    elapsed_fraction: f64,
) -> [f64; CRITIC_OBS_DIM] {
    let mut out = [0.0; CRITIC_OBS_DIM];
    out[..ACTOR_OBS_DIM].copy_from_slice(&truth.features(variant));
    out[12] = ball_vel_body.x;
    out[13] = ball_vel_body.y;
    out[14] = command.vx / ROBOT_VEL_SCALE[0];
    out[15] = command.vy / ROBOT_VEL_SCALE[1];
    out[16] = command.wz / ROBOT_VEL_SCALE[2];
    out[17] = elapsed_fraction;
    out
}

/// Actor and critic weights plus the learnable per-dimension action log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
}

impl PolicyParams {
    pub fn new(actor_hidden: &[usize], critic_hidden: &[usize], init_std: f64, rng: &mut impl Rng) -> Self {
        let actor_sizes = layer_sizes(ACTOR_OBS_DIM, actor_hidden, ACTION_DIM);
        let critic_sizes = layer_sizes(CRITIC_OBS_DIM, critic_hidden, 1);
        let actor = Mlp::new(&actor_sizes, 0.01, rng);
        let critic = Mlp::new(&critic_sizes, 1.0, rng);
        let raw = (init_std - STD_FLOOR).max(1e-6).ln();
        Self { actor, critic, log_std: vec![raw; ACTION_DIM] }
    }

    pub fn zeros(actor_hidden: &[usize], critic_hidden: &[usize]) -> Self {
        Self {
            actor: Mlp::zeros(&layer_sizes(ACTOR_OBS_DIM, actor_hidden, ACTION_DIM)),
            critic: Mlp::zeros(&layer_sizes(CRITIC_OBS_DIM, critic_hidden, 1)),
            log_std: vec![0.0; ACTION_DIM],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self { actor: self.actor.zeros_like(), critic: self.critic.zeros_like(), log_std: vec![0.0; self.log_std.len()] }
    }

    pub fn validate(&self) -> Result<()> {
        self.actor.validate()?;
        self.critic.validate()?;
        if self.actor.input_dim() != ACTOR_OBS_DIM || self.actor.output_dim() != ACTION_DIM {
            return Err(Error::Shape(format!(
                "actor must map {ACTOR_OBS_DIM} -> {ACTION_DIM}, got {} -> {}",
                self.actor.input_dim(),
                self.actor.output_dim()
            )));
        }
        if self.critic.input_dim() != CRITIC_OBS_DIM || self.critic.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "critic must map {CRITIC_OBS_DIM} -> 1, got {} -> {}",
                self.critic.input_dim(),
                self.critic.output_dim()
            )));
        }
        if self.log_std.len() != ACTION_DIM || !self.log_std.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("log-std head must hold 3 finite values".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.critic.num_params() + self.log_std.len()
    }

    /// Flat view: actor layers, critic layers, log-std.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.actor.params());
        out.extend(self.critic.params());
        out.extend(&self.log_std);
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for p in self.actor.params_mut().chain(self.critic.params_mut()).chain(self.log_std.iter_mut()) {
            *p = *it.next().unwrap();
        }
    }

    /// Effective per-dimension std in normalised units.
    pub fn action_std(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| STD_FLOOR + self.log_std[i].exp())
    }

    pub fn value(&self, critic_input: &[f64]) -> f64 {
        self.critic.forward(critic_input)[0]
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Diagonal Gaussian over the normalised action space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead {
    pub mean: [f64; 3],
    pub log_std: [f64; 3],
}

impl GaussianHead {
    pub fn log_prob(&self, a: &[f64; 3]) -> f64 {
        (0..3)
            .map(|i| {
                let std = self.log_std[i].exp();
                let z = (a[i] - self.mean[i]) / std;
                -0.5 * z * z - self.log_std[i] - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
    }
}

/// Policy distribution for scaled actor features.
pub fn policy_head(features: &[f64], params: &PolicyParams) -> GaussianHead {
    let z = params.actor.forward(features);
    let std = params.action_std();
    GaussianHead { mean: [z[0].tanh(), z[1].tanh(), z[2].tanh()], log_std: std.map(f64::ln) }
}

/// Actor mean and log-std in increment units (m/s, m/s, rad/s).
pub fn actor_forward(obs: &HighLevelObs, variant: AblationVariant, params: &PolicyParams) -> ([f64; 3], [f64; 3]) {
    let head = policy_head(&obs.features(variant), params);
    let mean = [0, 1, 2].map(|i| head.mean[i] * INCREMENT_BOUNDS[i]);
    let log_std = [0, 1, 2].map(|i| head.log_std[i] + INCREMENT_BOUNDS[i].ln());
    (mean, log_std)
}

/// End-to-end baseline: the same network read as an absolute command.
pub fn end_to_end_forward(obs: &HighLevelObs, params: &PolicyParams, envelope: &CommandEnvelope) -> VelocityCommand {
    let head = policy_head(&obs.features(AblationVariant::EndToEnd), params);
    envelope.command_from_normalized(&head.mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    /// Unclamped normalised sample; this is what the log-prob refers to.
    pub raw: [f64; 3],
    pub log_prob: f64,
}

impl SampledAction {
    pub fn increment(&self) -> VelocityIncrement {
        VelocityIncrement::from_normalized(&self.raw)
    }
}

/// Draws from the policy Gaussian. The applied increment is the clamped
/// sample; the log-prob is that of the raw sample.
pub fn sample_action(head: &GaussianHead, rng: &mut impl Rng) -> SampledAction {
    let mut raw = [0.0; 3];
    for i in 0..3 {
        let n: f64 = StandardNormal.sample(rng);
        raw[i] = head.mean[i] + head.log_std[i].exp() * n;
    }
    SampledAction { raw, log_prob: head.log_prob(&raw) }
}

/// Anything that can pick a normalised coach action.
pub trait CoachPolicy: Sync {
    fn act(&self, features: &[f64; ACTOR_OBS_DIM], obs: &HighLevelObs) -> [f64; 3];
}

/// Deterministic evaluation of trained parameters (the Gaussian mean).
pub struct MeanPolicy<'a>(pub &'a PolicyParams);

impl CoachPolicy for MeanPolicy<'_> {
    fn act(&self, features: &[f64; ACTOR_OBS_DIM], _obs: &HighLevelObs) -> [f64; 3] {
        policy_head(features, self.0).mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state_at(x: f64, y: f64, heading: f64) -> WorldState {
        WorldState {
            robot_pos: Vector2::new(x, y),
            robot_heading: heading,
            robot_vel: Vector3::new(0.1, 0.0, 0.2),
            ball_pos: Vector2::new(2.0, 0.0),
            ball_vel: Vector2::zeros(),
            upright: true,
            sim_time: 0.0,
        }
    }

    fn truth_obs(s: &WorldState, goal: Vector2<f64>, variant: AblationVariant) -> HighLevelObs {
        let b = s.to_body(s.ball_pos);
        build_obs(s, &Vector3::new(b.x, b.y, 0.1), &s.to_body(goal), &Vector3::new(0.1, -0.05, 0.02), &Vector2::new(0.3, -0.2), variant)
            .unwrap()
    }

    #[test]
    fn aligned_frames() {
        let s = state_at(0.0, 0.0, 0.0);
        let o = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::Full);
        assert!((o.p_robot_ball - Vector2::new(2.0, 0.0)).norm() < 1e-15);
        assert_eq!(o.d_ball, 2.0);
    }

    #[test]
    fn heading_quarter_turn() {
        let s = state_at(0.0, 0.0, PI / 2.0);
        let o = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::Full);
        // rotation oracle: body = R(-pi/2) * (2, 0) = (0, -2)
        let (c, sn) = ((-PI / 2.0).cos(), (-PI / 2.0).sin());
        let oracle = Vector2::new(c * 2.0, sn * 2.0);
        assert!((o.p_robot_ball - oracle).norm() < 1e-12);
        assert!((o.p_robot_ball - Vector2::new(0.0, -2.0)).norm() < 1e-12);
    }

    #[test]
    fn no_distances_masks_only_distance_slots() {
        let s = state_at(-1.0, 0.5, 0.3);
        let g = Vector2::new(4.5, 0.0);
        let full = truth_obs(&s, g, AblationVariant::Full).features(AblationVariant::Full);
        let ablated = truth_obs(&s, g, AblationVariant::NoDistances).features(AblationVariant::NoDistances);
        for i in 0..ACTOR_OBS_DIM {
            if i == 4 || i == 5 {
                assert_eq!(ablated[i], 0.0);
            } else {
                assert_eq!(full[i].to_bits(), ablated[i].to_bits(), "slot {i}");
            }
        }
    }

    #[test]
    fn replace_cprev_uses_ball_rate() {
        let s = state_at(-1.0, 0.5, 0.3);
        let o = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::ReplaceCprev);
        assert_eq!(o.c_prev, Vector3::new(0.3, -0.2, 0.0));
        let f = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::Full);
        assert_eq!(o.p_robot_ball, f.p_robot_ball);
        assert_eq!(o.d_goal, f.d_goal);
    }

    #[test]
    fn non_finite_estimate_faults() {
        let s = state_at(0.0, 0.0, 0.0);
        let r = build_obs(&s, &Vector3::new(f64::NAN, 0.0, 0.0), &Vector2::zeros(), &Vector3::zeros(), &Vector2::zeros(), AblationVariant::Full);
        assert!(matches!(r, Err(Error::NumericFault(_))));
    }

    #[test]
    fn integrate_from_rest_and_saturation() {
        let env = CommandEnvelope::default();
        let c = integrate_command(&VelocityCommand::default(), &VelocityIncrement::clamped(0.2, 0.0, 0.0), &env);
        assert_eq!(c, VelocityCommand::new(0.2, 0.0, 0.0));
        let top = VelocityCommand::new(env.max[0], 0.0, 0.0);
        let c = integrate_command(&top, &VelocityIncrement::clamped(0.2, 0.0, 0.0), &env);
        assert_eq!(c.vx, env.max[0]);
    }

    #[test]
    fn increment_clamping() {
        let inc = VelocityIncrement::from_normalized(&[5.0, -3.0, 0.5]);
        assert_eq!(inc.dvx, 0.2);
        assert_eq!(inc.dvy, -0.1);
        assert!((inc.dwz - 0.05).abs() < 1e-15);
        assert!(inc.within_bounds());
    }

    #[test]
    fn zero_network_outputs_rest() {
        let p = PolicyParams::zeros(&[8, 8], &[8]);
        let s = state_at(0.0, 0.0, 0.0);
        let o = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::Full);
        let (mean, _) = actor_forward(&o, AblationVariant::Full, &p);
        assert_eq!(mean, [0.0; 3]);
        let cmd = end_to_end_forward(&o, &p, &CommandEnvelope::default());
        assert_eq!(cmd, VelocityCommand::default());
    }

    #[test]
    fn tiny_actor_closed_form() {
        // a single 12 -> 3 layer: mean_i = bound_i * tanh(w_i . x + b_i)
        let mut p = PolicyParams::zeros(&[], &[]);
        let s = state_at(0.0, 0.0, 0.0);
        let o = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::Full);
        let x = o.features(AblationVariant::Full);
        p.actor.layers[0].weights[0] = 0.7;
        p.actor.layers[0].bias[0] = -0.1;
        p.actor.layers[0].weights[12 + 6] = 2.0;
        let (mean, _) = actor_forward(&o, AblationVariant::Full, &p);
        assert!((mean[0] - 0.2 * (0.7 * x[0] - 0.1).tanh()).abs() < 1e-15);
        assert!((mean[1] - 0.1 * (2.0 * x[6]).tanh()).abs() < 1e-15);
        assert_eq!(mean[2], 0.0);
    }

    #[test]
    fn actor_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolicyParams::new(&[16, 16], &[16], 0.5, &mut rng);
        let s = state_at(0.0, 0.0, 0.0);
        let o = truth_obs(&s, Vector2::new(4.5, 0.0), AblationVariant::Full);
        assert_eq!(actor_forward(&o, AblationVariant::Full, &p), actor_forward(&o, AblationVariant::Full, &p));
    }

    #[test]
    fn degenerate_std_gives_clamped_mean() {
        let head = GaussianHead { mean: [0.3, -1.7, 0.9], log_std: [f64::NEG_INFINITY; 3] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sample_action(&head, &mut rng);
        assert_eq!(a.increment(), VelocityIncrement::from_normalized(&head.mean));
    }

    #[test]
    fn sample_statistics() {
        let head = GaussianHead { mean: [0.2, -0.4, 0.0], log_std: [0.3f64.ln(), 0.1f64.ln(), 0.5f64.ln()] };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let samples: Vec<_> = (0..n).map(|_| sample_action(&head, &mut rng).raw).collect();
        for i in 0..3 {
            let std = head.log_std[i].exp();
            let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - head.mean[i]).abs() < 3.0 * std / (n as f64).sqrt(), "mean dim {i}");
            // std of the sample variance of a Gaussian is sigma^2 * sqrt(2/(n-1))
            let var_sigma = std * std * (2.0 / (n - 1) as f64).sqrt();
            assert!((var - std * std).abs() < 3.0 * var_sigma, "var dim {i}");
        }
    }

    #[test]
    fn log_prob_matches_density() {
        let head = GaussianHead { mean: [0.2, -0.4, 0.1], log_std: [-1.2, -0.3, 0.4] };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a = sample_action(&head, &mut rng);
            let density: f64 = (0..3)
                .map(|i| {
                    let s = head.log_std[i].exp();
                    (-(a.raw[i] - head.mean[i]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
                })
                .product();
            assert!((a.log_prob - density.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn end_to_end_within_envelope() {
        let env = CommandEnvelope::default();
        for a in [[-5.0, 5.0, 0.3], [1.0, -1.0, -1.0], [0.99, 0.0, -0.5]] {
            assert!(env.contains(&env.command_from_normalized(&a)));
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::new(&[5], &[4], 0.5, &mut rng);
        let mut q = p.zeros_like();
        q.assign(&p.flatten());
        assert_eq!(p, q);
    }
}
