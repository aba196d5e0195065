//! The multi-order execution environment.
//!
//! One episode executes one [`OrderSet`](crate::market::OrderSet) over one
//! trading day divided into `T` equal steps. Within a step each agent's
//! volume is spread over the step's minutes (evenly on the learned-policy
//! path; baselines may allocate minutes directly), priced at the
//! volume-weighted average of those minute prices, and the shared cash
//! constraint scales acquisition volumes so the balance never goes negative.

mod config;
mod engine;
mod observation;
mod trace;

pub use config::EnvConfig;
pub use engine::{
    reset, AgentAccounting, EpisodeAccounting, ExecutionEnv, RewardTerms, StepResult,
};
pub use observation::AgentObservation;
pub use trace::{observation_digest, write_episode_trace, StepTraceRecord};
