//! Training configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Environment steps collected per update cycle.
    pub update_every_steps: usize,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub ppo_clip: f64,
    pub ppo_epochs: usize,
    /// Epochs of action-value regression before each attribution pass.
    pub q_fit_epochs: usize,
    pub value_loss_weight: f64,
    pub entropy_weight: f64,
    pub total_env_steps: usize,
    pub seed: u64,
    /// Train each agent on its own reward instead of the shared mean
    /// (the single-agent baseline configuration).
    pub per_agent_reward: bool,
    pub workers: usize,
    /// Validation evaluation cadence, in update cycles.
    pub eval_every_updates: usize,
    /// Checkpoint cadence, in update cycles (a final checkpoint is always
    /// written).
    pub checkpoint_every_updates: usize,
    /// Optional checkpoint to restore parameters and optimizer state from.
    pub resume_from: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 128,
            update_every_steps: 2000,
            gae_lambda: 0.9,
            gamma: 1.0,
            ppo_clip: 0.2,
            ppo_epochs: 4,
            q_fit_epochs: 3,
            value_loss_weight: 0.5,
            entropy_weight: 0.01,
            total_env_steps: 100_000,
            seed: 0,
            per_agent_reward: false,
            workers: 1,
            eval_every_updates: 1,
            checkpoint_every_updates: 10,
            resume_from: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::validation("lr must be positive"));
        }
        if self.batch_size == 0 || self.update_every_steps == 0 || self.ppo_epochs == 0 {
            return Err(Error::validation(
                "batch_size, update_every_steps and ppo_epochs must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation("gae_lambda and gamma must lie in [0,1]"));
        }
        if !(self.ppo_clip > 0.0) {
            return Err(Error::validation("ppo_clip must be positive"));
        }
        if self.value_loss_weight < 0.0 || self.entropy_weight < 0.0 {
            return Err(Error::validation("loss weights must be non-negative"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be >= 1"));
        }
        Ok(())
    }
}
