//! Shared TOML configuration. Two profiles ship with the crate: `small`
//! (desk-scale networks and batches) and `faithful` (the full-size network
//! and PPO batch layout).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coach::CommandEnvelope;
use crate::error::{Error, Result};
use crate::perception::{CameraCalib, NoiseModel};
use crate::ppo::PpoConfig;
use crate::rewards::{PhaseThresholds, RewardWeights};
use crate::tracker::TrackerConfig;
use crate::world::{FieldConfig, RandomizationSpec, LOW_LEVEL_DT};

const SMALL_PROFILE: &str = include_str!("../configs/small.toml");
const FAITHFUL_PROFILE: &str = include_str!("../configs/faithful.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Row-major 3x3 intrinsic matrix.
    pub intrinsics: [f64; 9],
    /// Row-major 3x3 camera-to-robot rotation.
    pub rotation: [f64; 9],
    /// Camera-to-robot translation, m.
    pub translation: [f64; 3],
    pub detector_hz: f64,
    pub noise: NoiseModel,
}

impl PerceptionConfig {
    pub fn calib(&self) -> Result<CameraCalib> {
        CameraCalib::from_row_major(&self.intrinsics, &self.rotation, &self.translation)
    }

    /// Low-level steps between detector frames.
    pub fn detector_interval(&self) -> Result<usize> {
        let steps = 1.0 / (self.detector_hz * LOW_LEVEL_DT);
        let rounded = steps.round();
        if !(self.detector_hz > 0.0) || rounded < 1.0 || (steps - rounded).abs() > 1e-9 {
            return Err(Error::config("perception.detector_hz must divide the 50 Hz low-level rate"));
        }
        Ok(rounded as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoachConfig {
    pub envelope: CommandEnvelope,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Initial action std in normalised units.
    pub init_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardsConfig {
    pub thresholds: PhaseThresholds,
    pub weights: RewardWeights,
}

/// Kickoff ranges that widen linearly from `start` to the main
/// randomization ranges over the first `iterations` training iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumConfig {
    pub iterations: usize,
    pub start: RandomizationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_worlds: usize,
    pub iterations: usize,
    /// Absent means every episode uses the main ranges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curriculum: Option<CurriculumConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub field: FieldConfig,
    pub randomization: RandomizationSpec,
    pub tracker: TrackerConfig,
    pub perception: PerceptionConfig,
    pub coach: CoachConfig,
    pub rewards: RewardsConfig,
    pub ppo: PpoConfig,
    pub training: TrainingConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn small() -> Self {
        Self::from_toml(SMALL_PROFILE).expect("bundled small profile is valid")
    }

    pub fn faithful() -> Self {
        Self::from_toml(FAITHFUL_PROFILE).expect("bundled faithful profile is valid")
    }

    /// Bundled profile by name.
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "small" => Ok(Self::small()),
            "faithful" => Ok(Self::faithful()),
            other => Err(Error::config(format!("unknown profile `{other}` (expected small or faithful)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.randomization.validate()?;
        self.tracker.validate()?;
        self.perception.calib()?;
        self.perception.noise.validate()?;
        self.perception.detector_interval()?;
        self.coach.envelope.validate()?;
        if !(self.coach.init_std > 0.0) {
            return Err(Error::config("coach.init_std must be positive"));
        }
        self.rewards.thresholds.validate()?;
        self.rewards.weights.validate()?;
        self.ppo.validate()?;
        if let Some(c) = &self.training.curriculum {
            c.start.validate()?;
        }
        if self.training.n_worlds == 0 || self.ppo.batch_size % self.training.n_worlds != 0 {
            return Err(Error::config("training.n_worlds must divide ppo.batch_size"));
        }
        Ok(())
    }

    /// Kickoff ranges in force during training iteration `iteration` (0-based).
    pub fn randomization_at(&self, iteration: usize) -> RandomizationSpec {
        match &self.training.curriculum {
            Some(c) if c.iterations > 0 => {
                c.start.lerp(&self.randomization, iteration as f64 / c.iterations as f64)
            }
            _ => self.randomization.clone(),
        }
    }

    /// High-level decisions per episode.
    pub fn max_decisions(&self) -> usize {
        let decision_dt = LOW_LEVEL_DT * crate::coach::DECISION_INTERVAL as f64;
        (self.ppo.max_episode_seconds / decision_dt).round() as usize
    }
}
