//! The intention-aware policy.
//!
//! Per timestep each agent extracts a hidden state from its observation,
//! then the agents run several communication rounds: everyone's hidden
//! state is concatenated with a one-hot of its previously intended action,
//! exchanged through the channel, and re-decided. The last round's intended
//! actions are the ones executed. A joint action-value head embeds each
//! agent's initial hidden state with its action one-hot, mean-pools over
//! agents and regresses the shared return.
//!
//! One parameter set is shared by every agent and every round, so the same
//! checkpoint drives any number of orders.

mod checkpoint;
mod config;
mod forward;
mod network;

pub use checkpoint::{load_policy, save_policy};
pub use config::{ChannelKind, DecisionMode, PolicyConfig};
pub use forward::{IntentionTrace, LegalizeContext, ObsFeatures};
pub use network::{PolicyNetwork, ReplayNodes};
