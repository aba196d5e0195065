//! Policy configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// Mean of the other agents' encoded messages mixed with one's own.
    Broadcast,
    /// Multi-head attention over all agents' messages.
    Attention,
    /// No exchange: each agent keeps its own encoded message.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub rnn_hidden: usize,
    pub fc_hidden: usize,
    pub rounds_k: usize,
    pub channel: ChannelKind,
    pub n_heads: usize,
    pub intention_feedback: bool,
    /// Must match the environment's action grid length.
    pub action_count: usize,
    /// Feed the extractor only the last this-many minutes of market history
    /// (None = the whole visible history).
    pub market_window: Option<usize>,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            rnn_hidden: 64,
            fc_hidden: 128,
            rounds_k: 3,
            channel: ChannelKind::Broadcast,
            n_heads: 2,
            intention_feedback: true,
            action_count: 5,
            market_window: None,
            init_seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds_k == 0 {
            return Err(Error::validation("rounds_k must be >= 1"));
        }
        if self.action_count < 2 {
            return Err(Error::validation("action_count must be >= 2"));
        }
        if self.rnn_hidden == 0 || self.fc_hidden == 0 {
            return Err(Error::validation("hidden sizes must be positive"));
        }
        if self.channel == ChannelKind::Attention {
            if self.n_heads == 0 || self.fc_hidden % self.n_heads != 0 {
                return Err(Error::validation(format!(
                    "fc_hidden {} not divisible by {} heads",
                    self.fc_hidden, self.n_heads
                )));
            }
        }
        Ok(())
    }

    /// Without a channel there is nothing to exchange, so the policy runs a
    /// single decision pass regardless of `rounds_k`.
    pub fn effective_rounds(&self) -> usize {
        if self.channel == ChannelKind::None {
            1
        } else {
            self.rounds_k
        }
    }

    /// The no-communication single-agent configuration used as a baseline.
    pub fn no_comm(action_count: usize) -> Self {
        PolicyConfig {
            channel: ChannelKind::None,
            rounds_k: 1,
            intention_feedback: false,
            action_count,
            ..PolicyConfig::default()
        }
    }
}
