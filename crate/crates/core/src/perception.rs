//! Synthetic camera pipeline.
//!
//! Ball and goal detections are produced by projecting the true positions
//! into a calibrated pinhole camera and corrupting them with pixel noise,
//! depth noise, dropout and latency. Detections are lifted back into the
//! robot frame with `R * K^-1 * [x d, y d, d]^T + t`. Between deliveries the
//! held estimates are dead-reckoned by the robot's own motion.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{rotate, WorldState};

/// Detections closer than this to the camera plane are rejected.
pub const MIN_DEPTH: f64 = 0.05;

/// Camera intrinsics and camera-to-robot extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraCalib {
    pub fn new(k: Matrix3<f64>, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(Error::config("camera intrinsics need positive focal lengths"));
        }
        if k[(0, 1)] != 0.0 || k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0
        {
            return Err(Error::config("camera intrinsics must be [[fx,0,cx],[0,fy,cy],[0,0,1]]"));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::config("camera intrinsics are singular"))?;
        let orth_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(orth_err <= 1e-10) {
            return Err(Error::config(format!("camera rotation not orthonormal (err {orth_err:e})")));
        }
        if !((rotation.determinant() - 1.0).abs() <= 1e-10) {
            return Err(Error::config("camera rotation must have determinant +1"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::config("camera translation must be finite"));
        }
        Ok(Self { k, k_inv, rotation, translation })
    }

    /// Builds from row-major arrays as stored in the configuration file.
    pub fn from_row_major(intrinsics: &[f64; 9], rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(intrinsics),
            Matrix3::from_row_slice(rotation),
            Vector3::from_row_slice(translation),
        )
    }

    /// Forward-looking camera at `height` metres pitched down by `pitch` radians.
    pub fn pitched(fx: f64, fy: f64, cx: f64, cy: f64, pitch: f64, translation: Vector3<f64>) -> Result<Self> {
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        let (s, c) = pitch.sin_cos();
        // columns: camera x (right), y (down), z (optical axis) in robot axes
        let rotation = Matrix3::new(0.0, -s, c, -1.0, 0.0, 0.0, 0.0, -c, -s);
        Self::new(k, rotation, translation)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn focal(&self) -> (f64, f64) {
        (self.k[(0, 0)], self.k[(1, 1)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub pixel_x: f64,
    pub pixel_y: f64,
    pub depth: f64,
    pub valid: bool,
    /// Capture time, seconds.
    pub timestamp: f64,
}

impl Detection {
    pub fn invalid(timestamp: f64) -> Self {
        Self { pixel_x: 0.0, pixel_y: 0.0, depth: 0.0, valid: false, timestamp }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub pixel_noise_std: f64,
    /// Depth noise std as a fraction of true depth.
    pub depth_noise_frac: f64,
    pub dropout_prob: f64,
    /// Delivery delay in detector frames.
    pub detection_latency: u32,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { pixel_noise_std: 2.0, depth_noise_frac: 0.03, dropout_prob: 0.1, detection_latency: 1 }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { pixel_noise_std: 0.0, depth_noise_frac: 0.0, dropout_prob: 0.0, detection_latency: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_noise_std >= 0.0 && self.depth_noise_frac >= 0.0) {
            return Err(Error::config("perception noise std must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::config("perception.dropout_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Lifts a detection into the robot frame. Returns `None` for invalid
/// detections or non-positive depth.
pub fn back_project(det: &Detection, calib: &CameraCalib) -> Option<Vector3<f64>> {
    if !det.valid || !(det.depth > 0.0) {
        return None;
    }
    let d = det.depth;
    let ray = Vector3::new(det.pixel_x * d, det.pixel_y * d, d);
    Some(calib.rotation * (calib.k_inv * ray) + calib.translation)
}

/// Pinhole projection of a robot-frame point. Returns `(x, y, depth)` or
/// `None` if the point is not in front of the camera.
pub fn project(point_robot: &Vector3<f64>, calib: &CameraCalib) -> Option<(f64, f64, f64)> {
    let cam = calib.rotation.transpose() * (point_robot - calib.translation);
    if cam.z < MIN_DEPTH {
        return None;
    }
    let pix = calib.k * cam;
    Some((pix.x / pix.z, pix.y / pix.z, cam.z))
}

/// Noisy detection of a robot-frame point. Always consumes the same number of
/// random draws so streams stay aligned across outcomes.
pub fn detect_point(
    point_robot: &Vector3<f64>,
    timestamp: f64,
    calib: &CameraCalib,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Detection {
    let drop_draw: f64 = rng.random();
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    let nd: f64 = StandardNormal.sample(rng);
    let Some((x, y, depth)) = project(point_robot, calib) else {
        return Detection::invalid(timestamp);
    };
    if drop_draw < noise.dropout_prob {
        return Detection::invalid(timestamp);
    }
    let depth = depth * (1.0 + noise.depth_noise_frac * nd);
    if depth < MIN_DEPTH {
        return Detection::invalid(timestamp);
    }
    Detection {
        pixel_x: x + noise.pixel_noise_std * nx,
        pixel_y: y + noise.pixel_noise_std * ny,
        depth,
        valid: true,
        timestamp,
    }
}

/// Detects the ball of `state`, whose centre sits `ball_radius` above ground.
pub fn synth_detect(
    state: &WorldState,
    ball_radius: f64,
    calib: &CameraCalib,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Detection {
    let rel = state.to_body(state.ball_pos);
    let point = Vector3::new(rel.x, rel.y, ball_radius);
    detect_point(&point, state.sim_time, calib, noise, rng)
}

/// Robot-frame estimate of one target, held across dropouts and delayed by
/// the detector latency.
#[derive(Debug, Clone)]
struct HeldEstimate {
    estimate: Vector3<f64>,
    pending: VecDeque<Option<Vector3<f64>>>,
}

impl HeldEstimate {
    fn new(initial: Vector3<f64>) -> Self {
        Self { estimate: initial, pending: VecDeque::new() }
    }

    fn ego_motion(&mut self, body_vel: &Vector3<f64>, dt: f64) {
        let shift = Vector2::new(body_vel.x * dt, body_vel.y * dt);
        let turn = body_vel.z * dt;
        let apply = |p: &mut Vector3<f64>| {
            let planar = rotate(-turn, Vector2::new(p.x, p.y) - shift);
            p.x = planar.x;
            p.y = planar.y;
        };
        apply(&mut self.estimate);
        for p in self.pending.iter_mut().flatten() {
            apply(p);
        }
    }

    fn push(&mut self, measurement: Option<Vector3<f64>>, latency: usize) {
        self.pending.push_back(measurement);
        while self.pending.len() > latency {
            if let Some(Some(p)) = self.pending.pop_front() {
                self.estimate = p;
            }
        }
    }
}

/// Ball and goal estimates maintained for the coach.
#[derive(Debug, Clone)]
pub struct PerceptionPipeline {
    calib: CameraCalib,
    noise: NoiseModel,
    ball: HeldEstimate,
    goal: HeldEstimate,
    captures: u64,
}

impl PerceptionPipeline {
    /// Starts from known robot-frame positions (the kickoff configuration).
    pub fn new(calib: CameraCalib, noise: NoiseModel, state: &WorldState, ball_radius: f64, goal: Vector2<f64>) -> Self {
        let b = state.to_body(state.ball_pos);
        let g = state.to_body(goal);
        Self {
            calib,
            noise,
            ball: HeldEstimate::new(Vector3::new(b.x, b.y, ball_radius)),
            goal: HeldEstimate::new(Vector3::new(g.x, g.y, 0.0)),
            captures: 0,
        }
    }

    /// Dead-reckons held and in-flight estimates by one step of robot motion.
    pub fn ego_motion(&mut self, body_vel: &Vector3<f64>, dt: f64) {
        self.ball.ego_motion(body_vel, dt);
        self.goal.ego_motion(body_vel, dt);
    }

    /// Runs one detector frame on the current world state.
    pub fn capture(&mut self, state: &WorldState, ball_radius: f64, goal: Vector2<f64>, rng: &mut impl Rng) {
        self.captures += 1;
        let latency = self.noise.detection_latency as usize;
        let ball_det = synth_detect(state, ball_radius, &self.calib, &self.noise, rng);
        self.ball.push(back_project(&ball_det, &self.calib), latency);
        let g = state.to_body(goal);
        let goal_det = detect_point(&Vector3::new(g.x, g.y, 0.0), state.sim_time, &self.calib, &self.noise, rng);
        self.goal.push(back_project(&goal_det, &self.calib), latency);
    }

    pub fn ball_estimate(&self) -> Vector3<f64> {
        self.ball.estimate
    }

    pub fn goal_estimate(&self) -> Vector2<f64> {
        Vector2::new(self.goal.estimate.x, self.goal.estimate.y)
    }

    pub fn captures(&self) -> u64 {
        self.captures
    }
}
