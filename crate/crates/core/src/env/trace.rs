//! Episode trace export: one JSON line per step.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::observation::AgentObservation;
use crate::error::Result;

/// One row of the JSONL episode trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepTraceRecord {
    pub step: usize,
    /// SHA-256 over the canonical bytes of all agents' observations.
    pub observations_digest: String,
    pub actions: Vec<usize>,
    pub executed_fractions: Vec<f64>,
    pub per_agent_rewards: Vec<f64>,
    pub shared_reward: f64,
    pub cash: f64,
}

/// Digest of a set of observations: f64 bit patterns hashed in field order.
pub fn observation_digest(observations: &[AgentObservation]) -> String {
    let mut hasher = Sha256::new();
    let mut push = |xs: &[f64]| {
        for x in xs {
            hasher.update(x.to_bits().to_le_bytes());
        }
    };
    for obs in observations {
        push(&[
            obs.step as f64,
            obs.timesteps_t as f64,
            obs.elapsed_fraction,
            f64::from(obs.direction),
        ]);
        push(&obs.cash_history);
        push(&obs.traded_volume_history);
        push(&obs.price_history);
        push(&obs.volume_history);
    }
    hex::encode(hasher.finalize())
}

pub fn write_episode_trace(path: &Path, records: &[StepTraceRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        writeln!(file)?;
    }
    Ok(())
}
