//! PPO training with per-round action-value attribution.
//!
//! Each update cycle: collect on-policy rollouts, fit the joint action-value
//! head on the realized returns, attribute per-round advantages (value
//! differences between consecutive intended joint actions; GAE on real
//! rewards for the final round), then run clipped-surrogate updates over all
//! rounds simultaneously with one optimizer.

mod attribution;
mod buffer;
mod config;
mod ppo;
mod qfit;
mod rollout;
mod trainer;

pub use attribution::attribution_advantages;
pub use buffer::{compute_returns, RolloutBuffer, SampleRecord};
pub use config::TrainConfig;
pub use ppo::{ppo_update, UpdateStats};
pub use qfit::fit_q_estimator;
pub use rollout::collect_rollouts;
pub use trainer::{train, LogRow, TrainOutcome};
