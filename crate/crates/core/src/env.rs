//! One soccer episode driven at two rates: the coach decides every 10
//! low-level steps, and between decisions the tracker, world and perception
//! pipeline run at 50 Hz with the command held constant.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coach::{
    build_obs, critic_features, integrate_command, AblationVariant, HighLevelObs, VelocityCommand,
    VelocityIncrement, ACTOR_OBS_DIM, CRITIC_OBS_DIM, DECISION_INTERVAL,
};
use crate::config::Config;
use crate::error::Result;
use crate::perception::{CameraCalib, PerceptionPipeline};
use crate::rewards::{stage_rewards, total_reward, RewardBreakdown, RewardGeometry};
use crate::tracker::{fall_check, track};
use crate::world::{check_goal, out_of_bounds, reset_with, step_world, FieldConfig, WorldState, LOW_LEVEL_DT};

pub const DECISION_DT: f64 = LOW_LEVEL_DT * DECISION_INTERVAL as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Goal,
    Fell,
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub termination: Option<Termination>,
    /// The time limit was reached without a terminal event.
    pub truncated: bool,
    pub command: VelocityCommand,
}

impl StepOutcome {
    pub fn episode_over(&self) -> bool {
        self.termination.is_some() || self.truncated
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Observation {
    pub actor: HighLevelObs,
    pub actor_features: [f64; ACTOR_OBS_DIM],
    pub critic_features: [f64; CRITIC_OBS_DIM],
}

/// A single world with its own RNG stream.
#[derive(Debug, Clone)]
pub struct SoccerEnv {
    cfg: Config,
    calib: CameraCalib,
    detector_interval: usize,
    max_decisions: usize,
    variant: AblationVariant,
    rng: ChaCha8Rng,
    field: FieldConfig,
    state: WorldState,
    command: VelocityCommand,
    c_prev: Vector3<f64>,
    perception: PerceptionPipeline,
    prev_ball_est: Vector2<f64>,
    prev_ball_truth: Vector2<f64>,
    ball_rate_est: Vector2<f64>,
    ball_rate_truth: Vector2<f64>,
    low_level_steps: u64,
    decisions: usize,
}

impl SoccerEnv {
    pub fn new(cfg: &Config, variant: AblationVariant, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let calib = cfg.perception.calib()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, field) = reset_with(&mut rng, &cfg.randomization, &cfg.field)?;
        let perception =
            PerceptionPipeline::new(calib.clone(), cfg.perception.noise.clone(), &state, field.ball_radius, field.goal());
        let mut env = Self {
            cfg: cfg.clone(),
            calib,
            detector_interval: cfg.perception.detector_interval()?,
            max_decisions: cfg.max_decisions(),
            variant,
            rng,
            field,
            state,
            command: VelocityCommand::default(),
            c_prev: Vector3::zeros(),
            perception,
            prev_ball_est: Vector2::zeros(),
            prev_ball_truth: Vector2::zeros(),
            ball_rate_est: Vector2::zeros(),
            ball_rate_truth: Vector2::zeros(),
            low_level_steps: 0,
            decisions: 0,
        };
        env.reset_trackers();
        Ok(env)
    }

    /// Starts a new episode from the same RNG stream.
    pub fn reset(&mut self) -> Result<()> {
        let (state, field) = reset_with(&mut self.rng, &self.cfg.randomization, &self.cfg.field)?;
        self.perception = PerceptionPipeline::new(
            self.calib.clone(),
            self.cfg.perception.noise.clone(),
            &state,
            field.ball_radius,
            field.goal(),
        );
        self.state = state;
        self.field = field;
        self.command = VelocityCommand::default();
        self.c_prev = Vector3::zeros();
        self.low_level_steps = 0;
        self.decisions = 0;
        self.reset_trackers();
        Ok(())
    }

    fn reset_trackers(&mut self) {
        let est = self.perception.ball_estimate();
        self.prev_ball_est = Vector2::new(est.x, est.y);
        self.prev_ball_truth = self.state.to_body(self.state.ball_pos);
        self.ball_rate_est = Vector2::zeros();
        self.ball_rate_truth = Vector2::zeros();
    }

    /// Kickoff ranges for subsequent resets.
    pub fn set_randomization(&mut self, spec: &crate::world::RandomizationSpec) -> Result<()> {
        spec.validate()?;
        self.cfg.randomization = spec.clone();
        Ok(())
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn field(&self) -> &FieldConfig {
        &self.field
    }

    pub fn command(&self) -> &VelocityCommand {
        &self.command
    }

    pub fn variant(&self) -> AblationVariant {
        self.variant
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn low_level_steps(&self) -> u64 {
        self.low_level_steps
    }

    pub fn detector_frames(&self) -> u64 {
        self.perception.captures()
    }

    /// Actor observation from perception, critic observation from ground truth.
    pub fn observe(&self) -> Result<Observation> {
        let actor = build_obs(
            &self.state,
            &self.perception.ball_estimate(),
            &self.perception.goal_estimate(),
            &self.c_prev,
            &self.ball_rate_est,
            self.variant,
        )?;
        let b = self.state.to_body(self.state.ball_pos);
        let truth = build_obs(
            &self.state,
            &Vector3::new(b.x, b.y, self.field.ball_radius),
            &self.state.to_body(self.field.goal()),
            &self.c_prev,
            &self.ball_rate_truth,
            self.variant,
        )?;
        let ball_vel_body = crate::world::rotate(-self.state.robot_heading, self.state.ball_vel);
        let elapsed = self.decisions as f64 / self.max_decisions as f64;
        Ok(Observation {
            actor,
            actor_features: actor.features(self.variant),
            critic_features: critic_features(&truth, self.variant, &ball_vel_body, &self.command, elapsed),
        })
    }

    /// Applies one coach decision given a normalised action and runs the
    /// low-level loop until the next decision or a terminal event.
    pub fn step(&mut self, action: &[f64; 3]) -> Result<StepOutcome> {
        let envelope = &self.cfg.coach.envelope;
        let (command, change) = if self.variant.is_incremental() {
            let inc = VelocityIncrement::from_normalized(action);
            (integrate_command(&self.command, &inc, envelope), inc)
        } else {
            let cmd = envelope.command_from_normalized(action);
            (cmd, cmd.delta_from(&self.command))
        };

        let geom = RewardGeometry::from_state(&self.state, &self.field);
        let (stages, masks) =
            stage_rewards(&geom, &command, &change, &self.cfg.rewards.thresholds, &self.cfg.rewards.weights);

        self.command = command;
        self.c_prev = change.as_vector();

        let mut termination = None;
        for _ in 0..DECISION_INTERVAL {
            let achieved = track(self.state.robot_vel, &command, &self.cfg.tracker, LOW_LEVEL_DT, &mut self.rng);
            self.state = step_world(&self.state, achieved, LOW_LEVEL_DT, &self.field)?;
            self.perception.ego_motion(&achieved, LOW_LEVEL_DT);
            self.low_level_steps += 1;
            if self.low_level_steps % self.detector_interval as u64 == 0 {
                self.perception.capture(&self.state, self.field.ball_radius, self.field.goal(), &mut self.rng);
            }
            if fall_check(achieved, &self.cfg.tracker, LOW_LEVEL_DT, &mut self.rng) {
                self.state.upright = false;
                termination = Some(Termination::Fell);
                break;
            }
            if check_goal(&self.state, &self.field) {
                termination = Some(Termination::Goal);
                break;
            }
            if out_of_bounds(&self.state, &self.field) {
                termination = Some(Termination::OutOfBounds);
                break;
            }
        }
        self.decisions += 1;

        let est = self.perception.ball_estimate();
        let est = Vector2::new(est.x, est.y);
        let truth = self.state.to_body(self.state.ball_pos);
        self.ball_rate_est = (est - self.prev_ball_est) / DECISION_DT;
        self.ball_rate_truth = (truth - self.prev_ball_truth) / DECISION_DT;
        self.prev_ball_est = est;
        self.prev_ball_truth = truth;

        let scored = termination == Some(Termination::Goal);
        let reward = total_reward(&stages, masks.active(), self.state.upright, scored, &self.cfg.rewards.weights);
        let truncated = termination.is_none() && self.decisions >= self.max_decisions;
        Ok(StepOutcome { reward, termination, truncated, command })
    }

    /// Episode time in seconds.
    pub fn elapsed(&self) -> f64 {
        self.state.sim_time
    }
}
