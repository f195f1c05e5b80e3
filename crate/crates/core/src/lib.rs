//! Planar soccer world, a 5 Hz coach trained with PPO over bounded velocity
//! increments, a 50 Hz command tracker, staged rewards, a synthetic camera
//! and an ablation harness.

pub mod checkpoint;
pub mod coach;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod perception;
pub mod ppo;
pub mod rewards;
pub mod tracker;
pub mod world;

pub use coach::AblationVariant;
pub use config::Config;
pub use error::{Error, Result};
