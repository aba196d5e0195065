//! Per-round advantage attribution.
//!
//! Round k < K: A_k = Qhat(s, a_k) - Qhat(s, a_{k-1}), with the dummy
//! round's value taken as zero for k = 1 — the final decision's value is
//! telescoped across the refinement rounds. The final round uses GAE on the
//! realized rewards with the learned baseline V(s_t) = Qhat(s_t, a_{t,K-1}).

use crate::error::{Error, Result};
use crate::policy::PolicyNetwork;
use crate::training::buffer::RolloutBuffer;
use crate::training::qfit::compute_h0;

/// Fill `q_values` and `advantages` for every sample.
pub fn attribution_advantages(
    network: &PolicyNetwork,
    buffer: &mut RolloutBuffer,
    gamma: f64,
    lambda: f64,
    per_agent_reward: bool,
) -> Result<()> {
    if buffer.is_empty() {
        return Err(Error::validation("attribution on an empty buffer"));
    }
    compute_h0(network, buffer)?;
    let rounds = buffer.rounds();

    // Action values for every round's intended joint action. The stored
    // values are snapped to a fixed binary grid, so the telescoped sum over
    // rounds reproduces the final round's value exactly.
    for s in &mut buffer.samples {
        let h0 = s.h0.as_ref().expect("h0 computed above");
        let mut q = Vec::with_capacity(rounds + 1);
        for k in 0..=rounds {
            q.push(network.qhat_value(h0, &s.trace.actions[k])?);
        }
        s.q_values = q;
        s.advantages = vec![Vec::new(); rounds];
        for k in 1..rounds {
            let baseline = if k == 1 { 0.0 } else { s.q_values[k - 1] };
            let adv = s.q_values[k] - baseline;
            s.advantages[k - 1] = vec![adv; s.features.len()];
        }
    }

    // Final round: GAE over each episode with V(s_t) = q_values[K-1].
    let n_agents = buffer.n_agents();
    let mut i = 0;
    while i < buffer.samples.len() {
        let episode = buffer.samples[i].episode;
        let mut j = i;
        while j < buffer.samples.len() && buffer.samples[j].episode == episode {
            j += 1;
        }
        let mut gae_shared = 0.0;
        let mut gae_agents = vec![0.0; n_agents];
        let mut next_value = 0.0;
        for t in (i..j).rev() {
            let value = buffer.samples[t].q_values[rounds - 1];
            if per_agent_reward {
                let rewards = buffer.samples[t].per_agent_rewards.clone();
                let mut advs = Vec::with_capacity(n_agents);
                for (a, &r) in rewards.iter().enumerate() {
                    let delta = r + gamma * next_value - value;
                    gae_agents[a] = delta + gamma * lambda * gae_agents[a];
                    advs.push(gae_agents[a]);
                }
                buffer.samples[t].advantages[rounds - 1] = advs;
            } else {
                let delta = buffer.samples[t].shared_reward + gamma * next_value - value;
                gae_shared = delta + gamma * lambda * gae_shared;
                buffer.samples[t].advantages[rounds - 1] = vec![gae_shared; n_agents];
            }
            next_value = value;
        }
        i = j;
    }
    Ok(())
}
