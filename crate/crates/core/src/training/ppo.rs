//! Clipped-surrogate update over all rounds with one optimizer.
//!
//! The per-sample loss is
//!   -(1/K) sum_k sum_i min(r_ki A_k, clip(r_ki) A_k)
//!   - entropy_weight * mean_k,i H(pi_ki)
//!   + value_loss_weight * (Qhat(h0, a_K) - G)^2
//! with r_ki the ratio of new to recorded log-probabilities of the recorded
//! action. Advantages are normalized per round over the whole buffer before
//! minibatching. Gradients flow through the extractor, channel, decision
//! head and value head together.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, GradAccum, Graph, Tensor};
use crate::policy::PolicyNetwork;
use crate::rng::stream;
use crate::training::buffer::RolloutBuffer;
use crate::training::config::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub minibatches: usize,
}

/// Normalize advantages to zero mean / unit variance per round across the
/// buffer (all samples, all agents).
fn normalized_advantages(buffer: &RolloutBuffer) -> Vec<Vec<Vec<f64>>> {
    let rounds = buffer.rounds();
    let mut out: Vec<Vec<Vec<f64>>> = buffer
        .samples
        .iter()
        .map(|s| s.advantages.clone())
        .collect();
    for k in 0..rounds {
        let values: Vec<f64> = out
            .iter()
            .flat_map(|s| s[k].iter().copied())
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        for s in out.iter_mut() {
            for a in s[k].iter_mut() {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
    }
    out
}

/// Run `ppo_epochs` of minibatch updates over the buffer. A pure function
/// of (buffer, parameters, config, cycle): re-running on a saved buffer
/// reproduces the parameter deltas bitwise.
pub fn ppo_update(
    network: &mut PolicyNetwork,
    buffer: &RolloutBuffer,
    config: &TrainConfig,
    cycle: u64,
) -> Result<UpdateStats> {
    if buffer.is_empty() {
        return Err(Error::validation("ppo_update on an empty buffer"));
    }
    if buffer.samples.iter().any(|s| s.advantages.is_empty()) {
        return Err(Error::validation("advantages not computed"));
    }
    let advantages = normalized_advantages(buffer);
    let adam = AdamConfig::with_lr(config.lr);
    let rounds = buffer.rounds() as f64;

    let mut stats = UpdateStats::default();
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    for epoch in 0..config.ppo_epochs {
        let mut rng = stream(config.seed, "ppo-shuffle", cycle << 8 | epoch as u64);
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(config.batch_size) {
            let mut grads = GradAccum::new(&network.store);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let sample = &buffer.samples[idx];
                let n = sample.features.len();
                let mut g = Graph::new();
                let replay = network.replay_timestep(&mut g, &sample.features, &sample.trace)?;

                // Policy term over all rounds.
                let mut objective_terms = Vec::with_capacity(sample.trace.rounds());
                let mut entropy_terms = Vec::with_capacity(sample.trace.rounds());
                for k in 0..sample.trace.rounds() {
                    let old = g.input(Tensor::new(
                        n,
                        1,
                        sample.trace.log_probs[k].clone(),
                    )?);
                    let diff = g.sub(replay.round_log_probs[k], old)?;
                    let ratio = g.exp(diff);
                    let adv = g.input(Tensor::new(n, 1, advantages[idx][k].clone())?);
                    let unclipped = g.mul(ratio, adv)?;
                    let clipped_ratio =
                        g.clamp(ratio, 1.0 - config.ppo_clip, 1.0 + config.ppo_clip);
                    let clipped = g.mul(clipped_ratio, adv)?;
                    let objective = g.min_elem(unclipped, clipped)?;
                    objective_terms.push(g.sum(objective));
                    entropy_terms.push(replay.round_entropy[k]);
                }
                let mut policy_sum = objective_terms[0];
                for &term in &objective_terms[1..] {
                    policy_sum = g.add(policy_sum, term)?;
                }
                let policy_loss = g.scale(policy_sum, -1.0 / rounds);

                let mut entropy_sum = entropy_terms[0];
                for &term in &entropy_terms[1..] {
                    entropy_sum = g.add(entropy_sum, term)?;
                }
                let mean_entropy = g.scale(entropy_sum, 1.0 / (rounds * n as f64));
                let entropy_loss = g.scale(mean_entropy, -config.entropy_weight);

                // Value term on the executed action.
                let q = network.qhat(&mut g, replay.h0, sample.trace.final_actions())?;
                let target = g.input(Tensor::scalar(sample.return_to_go));
                let diff = g.sub(q, target)?;
                let sq = g.square(diff);
                let value_loss = g.scale(sq, config.value_loss_weight);

                let partial = g.add(policy_loss, entropy_loss)?;
                let total = g.add(partial, value_loss)?;

                stats.policy_loss += g.value(policy_loss).item();
                stats.value_loss += g.value(value_loss).item();
                stats.entropy += g.value(mean_entropy).item();
                stats.total_loss += g.value(total).item();

                let grad = g.backward(total)?;
                grads.add_from_graph(&g, &grad, scale);
            }
            if !grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in ppo_update (cycle {cycle}, epoch {epoch})"
                )));
            }
            network.store.adam_step(&grads, &adam)?;
            stats.minibatches += 1;
        }
    }
    let total_samples = (config.ppo_epochs * buffer.len()) as f64;
    stats.policy_loss /= total_samples;
    stats.value_loss /= total_samples;
    stats.entropy /= total_samples;
    stats.total_loss /= total_samples;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{DecisionMode, LegalizeContext, ObsFeatures, PolicyConfig};
    use crate::training::attribution::attribution_advantages;
    use crate::training::buffer::{compute_returns, SampleRecord};
    use rand::Rng;

    fn network(rounds: usize, seed: u64) -> PolicyNetwork {
        PolicyNetwork::init(PolicyConfig {
            rnn_hidden: 4,
            fc_hidden: 6,
            rounds_k: rounds,
            init_seed: seed,
            ..PolicyConfig::default()
        })
        .unwrap()
    }

    /// Sample a small on-policy buffer so replayed log-probs start equal to
    /// the recorded ones (ratio 1).
    fn sampled_buffer(net: &PolicyNetwork, episodes: usize, steps: usize, seed: u64) -> RolloutBuffer {
        let mut rng = crate::rng::stream(seed, "ppo-test-buffer", 0);
        let grid = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let mut buffer = RolloutBuffer::default();
        for e in 0..episodes {
            for t in 1..=steps {
                let n = 2;
                let feats: Vec<ObsFeatures> = (0..n)
                    .map(|_| ObsFeatures {
                        market: (0..4)
                            .map(|_| [1.0 + 0.01 * rng.gen::<f64>(), rng.gen::<f64>()])
                            .collect(),
                        scalars: [t as f64 / steps as f64, 1.0, rng.gen(), rng.gen()],
                    })
                    .collect();
                let ctx = LegalizeContext::unrestricted(n, &grid);
                let (trace, _) = net
                    .forward_timestep(
                        &feats,
                        DecisionMode::Sample,
                        Some(&mut rng),
                        &ctx,
                        net.config.effective_rounds(),
                    )
                    .unwrap();
                buffer.samples.push(SampleRecord {
                    episode: e,
                    step: t,
                    features: feats,
                    trace,
                    shared_reward: rng.gen::<f64>() - 0.5,
                    per_agent_rewards: vec![rng.gen::<f64>() - 0.5; n],
                    done: t == steps,
                    return_to_go: 0.0,
                    per_agent_returns: vec![],
                    h0: None,
                    q_values: vec![],
                    advantages: vec![],
                });
            }
        }
        buffer.n_episodes = episodes;
        buffer
    }

    fn prepared_buffer(net: &PolicyNetwork, seed: u64) -> RolloutBuffer {
        let mut buffer = sampled_buffer(net, 4, 3, seed);
        compute_returns(&mut buffer, 1.0);
        attribution_advantages(net, &mut buffer, 1.0, 0.9, false).unwrap();
        buffer
    }

    #[test]
    fn replay_determinism_bitwise() {
        let net = network(2, 3);
        let buffer = prepared_buffer(&net, 11);
        let config = TrainConfig {
            batch_size: 6,
            ppo_epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let mut n = network(2, 3);
            ppo_update(&mut n, &buffer, &config, 4).unwrap();
            n.store.flat_values()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_advantages_and_zero_entropy_weight_freeze_policy_head() {
        let net = network(2, 7);
        let mut buffer = prepared_buffer(&net, 13);
        for s in &mut buffer.samples {
            for k in s.advantages.iter_mut() {
                for a in k.iter_mut() {
                    *a = 0.0;
                }
            }
        }
        let config = TrainConfig {
            batch_size: 12,
            ppo_epochs: 1,
            entropy_weight: 0.0,
            value_loss_weight: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut trained = network(2, 7);
        ppo_update(&mut trained, &buffer, &config, 0).unwrap();
        // Zero advantage, zero entropy and zero value weight: nothing moves.
        assert_eq!(trained.store.flat_values(), net.store.flat_values());
    }

    #[test]
    fn positive_advantage_increases_action_probability() {
        let net = network(1, 21);
        let mut buffer = sampled_buffer(&net, 1, 1, 17);
        compute_returns(&mut buffer, 1.0);
        attribution_advantages(&net, &mut buffer, 1.0, 0.9, false).unwrap();
        // Single sample: force a positive advantage on the final round.
        buffer.samples[0].advantages[0] = vec![1.0, 1.0];
        let config = TrainConfig {
            batch_size: 1,
            ppo_epochs: 1,
            lr: 1e-3,
            entropy_weight: 0.0,
            value_loss_weight: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let sample = buffer.samples[0].clone();
        let before = {
            let mut g = Graph::new();
            let replay = net.replay_timestep(&mut g, &sample.features, &sample.trace).unwrap();
            g.value(replay.round_log_probs[0]).as_slice().to_vec()
        };
        let mut trained = network(1, 21);
        ppo_update(&mut trained, &buffer, &config, 0).unwrap();
        let after = {
            let mut g = Graph::new();
            let replay = trained
                .replay_timestep(&mut g, &sample.features, &sample.trace)
                .unwrap();
            g.value(replay.round_log_probs[0]).as_slice().to_vec()
        };
        for (b, a) in before.iter().zip(&after) {
            assert!(a > b, "log-prob did not increase: {b} -> {a}");
        }
    }

    #[test]
    fn k_equal_one_matches_standard_ppo_loss() {
        // With K=1 the attribution loss must equal a standard single-round
        // clipped PPO loss computed independently from the same buffer.
        let net = network(1, 31);
        let buffer = prepared_buffer(&net, 23);
        let config = TrainConfig {
            batch_size: buffer.len(),
            ppo_epochs: 1,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut trained = network(1, 31);
        let stats = ppo_update(&mut trained, &buffer, &config, 0).unwrap();

        // Reference: plain PPO on the final action, same normalization.
        let advantages = normalized_advantages(&buffer);
        let mut reference_policy = 0.0;
        let mut reference_entropy = 0.0;
        let mut reference_value = 0.0;
        for (idx, s) in buffer.samples.iter().enumerate() {
            let mut g = Graph::new();
            let replay = net.replay_timestep(&mut g, &s.features, &s.trace).unwrap();
            let n = s.features.len();
            let mut policy = 0.0;
            for i in 0..n {
                let new_lp = g.value(replay.round_log_probs[0]).get(i, 0);
                let ratio = (new_lp - s.trace.log_probs[0][i]).exp();
                let a = advantages[idx][0][i];
                let unclipped = ratio * a;
                let clipped = ratio.clamp(1.0 - config.ppo_clip, 1.0 + config.ppo_clip) * a;
                policy += unclipped.min(clipped);
            }
            reference_policy += -policy;
            reference_entropy += g.value(replay.round_entropy[0]).item() / n as f64;
            let q = {
                let mut g2 = Graph::new();
                let h0 = g2.input(s.h0.clone().unwrap());
                let qn = net.qhat(&mut g2, h0, s.trace.final_actions()).unwrap();
                g2.value(qn).item()
            };
            reference_value += config.value_loss_weight * (q - s.return_to_go).powi(2);
        }
        let m = buffer.len() as f64;
        assert!(
            (stats.policy_loss - reference_policy / m).abs() < 1e-9,
            "policy loss {} vs reference {}",
            stats.policy_loss,
            reference_policy / m
        );
        assert!((stats.entropy - reference_entropy / m).abs() < 1e-9);
        assert!(
            (stats.value_loss - reference_value / m).abs() < 1e-9,
            "value loss {} vs reference {}",
            stats.value_loss,
            reference_value / m
        );
    }

    #[test]
    fn clipped_ratio_blocks_gradient_outside_band() {
        // Construct a sample whose recorded log-prob is far below the
        // current one (ratio >> 1+eps) with positive advantage: the min
        // picks the clipped branch and the policy gradient vanishes.
        let net = network(1, 41);
        let mut buffer = sampled_buffer(&net, 1, 1, 19);
        compute_returns(&mut buffer, 1.0);
        attribution_advantages(&net, &mut buffer, 1.0, 0.9, false).unwrap();
        for lp in buffer.samples[0].trace.log_probs[0].iter_mut() {
            *lp -= 3.0; // ratio ~ e^3, far outside the band
        }
        buffer.samples[0].advantages[0] = vec![1.0, 1.0];
        let config = TrainConfig {
            batch_size: 1,
            ppo_epochs: 1,
            entropy_weight: 0.0,
            value_loss_weight: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut trained = network(1, 41);
        ppo_update(&mut trained, &buffer, &config, 0).unwrap();
        assert_eq!(trained.store.flat_values(), net.store.flat_values());
    }
}
