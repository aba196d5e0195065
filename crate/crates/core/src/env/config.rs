//! Environment configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Steps per episode; 8 for 240-minute days, 13 for 390-minute days.
    pub timesteps_t: usize,
    /// Selectable volume fractions; sorted, unique, starting at 0, ending at 1.
    pub action_fractions: Vec<f64>,
    /// Market-impact penalty coefficient.
    pub alpha: f64,
    /// Cash-exhaustion penalty coefficient.
    pub sigma: f64,
    /// Discount factor.
    pub gamma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            timesteps_t: 8,
            action_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            alpha: 0.01,
            sigma: 1.0 / 30.0,
            gamma: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps_t == 0 {
            return Err(Error::validation("timesteps_t must be >= 1"));
        }
        let f = &self.action_fractions;
        if f.len() < 2 || f[0] != 0.0 || *f.last().unwrap() != 1.0 {
            return Err(Error::validation(
                "action_fractions must start at 0 and end at 1",
            ));
        }
        if f.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "action_fractions must be strictly increasing",
            ));
        }
        if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::validation("action_fractions must lie in [0,1]"));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::validation("gamma must be in [0,1]"));
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        self.action_fractions.len()
    }
}
