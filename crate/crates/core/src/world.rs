//! Planar soccer world stepped at the low-level rate.
//!
//! The robot is a kinematic body following its tracked body-frame velocity
//! (unicycle with strafe). The ball is a point mass with constant rolling
//! deceleration. Robot-ball contact is a single impulse along the contact
//! normal, measured against the robot velocity scaled by the kick transfer
//! gain, so a faster approach produces a proportionally faster ball.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Low-level control period (50 Hz).
pub const LOW_LEVEL_DT: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub robot_pos: Vector2<f64>,
    /// Wrapped to (-pi, pi].
    pub robot_heading: f64,
    /// Body frame `[v_x, v_y, w_z]`.
    pub robot_vel: Vector3<f64>,
    pub ball_pos: Vector2<f64>,
    pub ball_vel: Vector2<f64>,
    pub upright: bool,
    pub sim_time: f64,
}

impl WorldState {
    /// Robot velocity in the field frame (planar part only).
    pub fn robot_world_vel(&self) -> Vector2<f64> {
        rotate(self.robot_heading, Vector2::new(self.robot_vel.x, self.robot_vel.y))
    }

    /// Expresses a field-frame point in the robot body frame.
    pub fn to_body(&self, world_point: Vector2<f64>) -> Vector2<f64> {
        rotate(-self.robot_heading, world_point - self.robot_pos)
    }

    pub fn ball_kinetic_energy(&self) -> f64 {
        0.5 * self.ball_vel.norm_squared()
    }

    fn is_finite(&self) -> bool {
        self.robot_pos.iter().all(|v| v.is_finite())
            && self.robot_heading.is_finite()
            && self.robot_vel.iter().all(|v| v.is_finite())
            && self.ball_pos.iter().all(|v| v.is_finite())
            && self.ball_vel.iter().all(|v| v.is_finite())
            && self.sim_time.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub field_length: f64,
    pub field_width: f64,
    pub goal_center: [f64; 2],
    pub goal_width: f64,
    pub ball_radius: f64,
    pub robot_contact_radius: f64,
    /// Rolling deceleration of the free ball, m/s^2.
    pub ball_friction_decel: f64,
    pub contact_restitution: f64,
    pub kick_transfer_gain: f64,
    /// Distance beyond the field bounding box at which the episode ends.
    pub out_of_bounds_margin: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            field_length: 9.0,
            field_width: 6.0,
            goal_center: [4.5, 0.0],
            goal_width: 2.6,
            ball_radius: 0.11,
            robot_contact_radius: 0.15,
            ball_friction_decel: 0.5,
            contact_restitution: 0.5,
            kick_transfer_gain: 1.0,
            out_of_bounds_margin: 0.5,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("field_length", self.field_length),
            ("field_width", self.field_width),
            ("goal_width", self.goal_width),
            ("ball_radius", self.ball_radius),
            ("robot_contact_radius", self.robot_contact_radius),
            ("ball_friction_decel", self.ball_friction_decel),
            ("kick_transfer_gain", self.kick_transfer_gain),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("field.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.contact_restitution) {
            return Err(Error::config("field.contact_restitution must lie in [0, 1]"));
        }
        if !(self.out_of_bounds_margin >= 0.0) {
            return Err(Error::config("field.out_of_bounds_margin must be non-negative"));
        }
        self.goal_normal()?;
        Ok(())
    }

    pub fn goal(&self) -> Vector2<f64> {
        Vector2::new(self.goal_center[0], self.goal_center[1])
    }

    /// Outward normal of the boundary line the goal sits on.
    pub fn goal_normal(&self) -> Result<Vector2<f64>> {
        let [gx, gy] = self.goal_center;
        let (hl, hw) = (self.field_length / 2.0, self.field_width / 2.0);
        let tol = 1e-9;
        if (gx.abs() - hl).abs() < tol && gy.abs() <= hw {
            Ok(Vector2::new(gx.signum(), 0.0))
        } else if (gy.abs() - hw).abs() < tol && gx.abs() <= hl {
            Ok(Vector2::new(0.0, gy.signum()))
        } else {
            Err(Error::config("field.goal_center must lie on a field boundary line"))
        }
    }
}

/// Per-episode randomization ranges. Each range is a closed interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationSpec {
    pub ball_friction_decel: [f64; 2],
    pub restitution: [f64; 2],
    pub robot_x: [f64; 2],
    pub robot_y: [f64; 2],
    pub robot_heading: [f64; 2],
    pub ball_x: [f64; 2],
    pub ball_y: [f64; 2],
    pub rng_seed: u64,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self {
            ball_friction_decel: [0.4, 0.6],
            restitution: [0.4, 0.6],
            robot_x: [-3.5, -1.5],
            robot_y: [-1.5, 1.5],
            robot_heading: [-PI / 2.0, PI / 2.0],
            ball_x: [-0.5, 1.5],
            ball_y: [-1.5, 1.5],
            rng_seed: 0,
        }
    }
}

impl RandomizationSpec {
    fn ranges(&self) -> [(&'static str, [f64; 2]); 7] {
        [
            ("ball_friction_decel", self.ball_friction_decel),
            ("restitution", self.restitution),
            ("robot_x", self.robot_x),
            ("robot_y", self.robot_y),
            ("robot_heading", self.robot_heading),
            ("ball_x", self.ball_x),
            ("ball_y", self.ball_y),
        ]
    }

    /// Componentwise linear blend of every interval; `f = 0` gives `self`,
    /// `f = 1` gives `to`. The seed is taken from `to`.
    pub fn lerp(&self, to: &Self, f: f64) -> Self {
        let f = f.clamp(0.0, 1.0);
        let mix = |a: [f64; 2], b: [f64; 2]| [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f];
        Self {
            ball_friction_decel: mix(self.ball_friction_decel, to.ball_friction_decel),
            restitution: mix(self.restitution, to.restitution),
            robot_x: mix(self.robot_x, to.robot_x),
            robot_y: mix(self.robot_y, to.robot_y),
            robot_heading: mix(self.robot_heading, to.robot_heading),
            ball_x: mix(self.ball_x, to.ball_x),
            ball_y: mix(self.ball_y, to.ball_y),
            rng_seed: to.rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in self.ranges() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::config(format!(
                    "randomization.{name}: invalid interval [{lo}, {hi}]"
                )));
            }
        }
        let [flo, _] = self.ball_friction_decel;
        if flo <= 0.0 {
            return Err(Error::config("randomization.ball_friction_decel must be positive"));
        }
        let [rlo, rhi] = self.restitution;
        if rlo < 0.0 || rhi > 1.0 {
            return Err(Error::config("randomization.restitution must lie within [0, 1]"));
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// Resets a world using a fresh RNG seeded from `spec.rng_seed`.
pub fn reset(spec: &RandomizationSpec, field: &FieldConfig) -> Result<(WorldState, FieldConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    reset_with(&mut rng, spec, field)
}

/// Resets a world drawing from an existing stream. Returns the initial state
/// and the field with its per-episode physical parameters filled in.
pub fn reset_with(
    rng: &mut impl Rng,
    spec: &RandomizationSpec,
    field: &FieldConfig,
) -> Result<(WorldState, FieldConfig)> {
    spec.validate()?;
    let mut episode_field = field.clone();
    episode_field.ball_friction_decel = draw(rng, spec.ball_friction_decel);
    episode_field.contact_restitution = draw(rng, spec.restitution);
    let robot_pos = Vector2::new(draw(rng, spec.robot_x), draw(rng, spec.robot_y));
    let robot_heading = wrap_angle(draw(rng, spec.robot_heading));
    let ball_pos = Vector2::new(draw(rng, spec.ball_x), draw(rng, spec.ball_y));
    let state = WorldState {
        robot_pos,
        robot_heading,
        robot_vel: Vector3::zeros(),
        ball_pos,
        ball_vel: Vector2::zeros(),
        upright: true,
        sim_time: 0.0,
    };
    Ok((state, episode_field))
}

/// Advances the world by `dt` with the robot moving at `tracked_vel`
/// (body frame, as achieved by the low-level tracker).
pub fn step_world(
    state: &WorldState,
    tracked_vel: Vector3<f64>,
    dt: f64,
    field: &FieldConfig,
) -> Result<WorldState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::numeric(format!("step_world: invalid dt {dt}")));
    }
    if !state.is_finite() || !tracked_vel.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("step_world: non-finite state or velocity"));
    }

    let mut next = state.clone();
    next.robot_vel = tracked_vel;
    let robot_world_vel = next.robot_world_vel();
    next.robot_pos += robot_world_vel * dt;
    next.robot_heading = wrap_angle(state.robot_heading + tracked_vel.z * dt);

    next.ball_pos += state.ball_vel * dt;
    let speed = state.ball_vel.norm();
    if speed > 0.0 {
        let slowed = (speed - field.ball_friction_decel * dt).max(0.0);
        next.ball_vel = state.ball_vel * (slowed / speed);
    }

    resolve_contact(&mut next, robot_world_vel, field);
    next.sim_time = state.sim_time + dt;
    Ok(next)
}

fn resolve_contact(state: &mut WorldState, robot_world_vel: Vector2<f64>, field: &FieldConfig) {
    let contact_dist = field.robot_contact_radius + field.ball_radius;
    let offset = state.ball_pos - state.robot_pos;
    let dist = offset.norm();
    if dist >= contact_dist {
        return;
    }
    let normal = if dist > 1e-12 {
        offset / dist
    } else {
        Vector2::new(state.robot_heading.cos(), state.robot_heading.sin())
    };
    let effective = robot_world_vel * field.kick_transfer_gain;
    let rel_normal = (state.ball_vel - effective).dot(&normal);
    if rel_normal < 0.0 {
        state.ball_vel -= normal * ((1.0 + field.contact_restitution) * rel_normal);
    }
    state.ball_pos = state.robot_pos + normal * contact_dist;
}

/// True iff the ball centre is past the goal line by more than one ball
/// radius and within the goal mouth.
pub fn check_goal(state: &WorldState, cfg: &FieldConfig) -> bool {
    let Ok(normal) = cfg.goal_normal() else {
        return false;
    };
    let rel = state.ball_pos - cfg.goal();
    let depth = rel.dot(&normal);
    let lateral = (rel.x * normal.y - rel.y * normal.x).abs();
    depth > cfg.ball_radius && lateral <= cfg.goal_width / 2.0
}

pub fn out_of_bounds(state: &WorldState, cfg: &FieldConfig) -> bool {
    let hx = cfg.field_length / 2.0 + cfg.out_of_bounds_margin;
    let hy = cfg.field_width / 2.0 + cfg.out_of_bounds_margin;
    let outside = |p: &Vector2<f64>| p.x.abs() > hx || p.y.abs() > hy;
    outside(&state.robot_pos) || outside(&state.ball_pos)
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

pub fn rotate(angle: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}
