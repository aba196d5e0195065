//! The rollout buffer: per-step records with returns and advantages.

use crate::nn::Tensor;
use crate::policy::{IntentionTrace, ObsFeatures};

/// One environment step of one episode, with everything needed to replay
/// the policy decision under new parameters.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    /// Episode index within the buffer.
    pub episode: usize,
    /// Step within the episode, 1-based.
    pub step: usize,
    pub features: Vec<ObsFeatures>,
    pub trace: IntentionTrace,
    pub shared_reward: f64,
    pub per_agent_rewards: Vec<f64>,
    /// Episode terminates after this step.
    pub done: bool,

    /// Shared return-to-go; filled by `compute_returns`.
    pub return_to_go: f64,
    /// Per-agent returns-to-go; filled by `compute_returns`.
    pub per_agent_returns: Vec<f64>,
    /// Extractor output under the parameters that fit the value head.
    pub h0: Option<Tensor>,
    /// Snapped action values per round, index 0 holding the value of the
    /// dummy joint action.
    pub q_values: Vec<f64>,
    /// Per round (k = 1..K), per agent: the advantage used by PPO.
    pub advantages: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub samples: Vec<SampleRecord>,
    pub n_episodes: usize,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.samples.first().map(|s| s.features.len()).unwrap_or(0)
    }

    pub fn rounds(&self) -> usize {
        self.samples.first().map(|s| s.trace.rounds()).unwrap_or(0)
    }

    /// Append another buffer, reindexing its episodes after ours.
    pub fn extend(&mut self, other: RolloutBuffer) {
        let offset = self.n_episodes;
        for mut s in other.samples {
            s.episode += offset;
            self.samples.push(s);
        }
        self.n_episodes += other.n_episodes;
    }
}

/// Returns-to-go within each episode: G_t = r_t + gamma * G_{t+1}.
/// Fills both the shared and the per-agent variants.
pub fn compute_returns(buffer: &mut RolloutBuffer, gamma: f64) {
    let mut i = 0;
    while i < buffer.samples.len() {
        // Find the episode extent [i, j).
        let episode = buffer.samples[i].episode;
        let mut j = i;
        while j < buffer.samples.len() && buffer.samples[j].episode == episode {
            j += 1;
        }
        debug_assert!(buffer.samples[j - 1].done, "episode without terminal step");
        let n = buffer.samples[i].per_agent_rewards.len();
        let mut shared = 0.0;
        let mut per_agent = vec![0.0; n];
        for t in (i..j).rev() {
            let s = &mut buffer.samples[t];
            shared = s.shared_reward + gamma * shared;
            s.return_to_go = shared;
            for (acc, &r) in per_agent.iter_mut().zip(&s.per_agent_rewards) {
                *acc = r + gamma * *acc;
            }
            s.per_agent_returns = per_agent.clone();
        }
        i = j;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::IntentionTrace;

    fn sample(episode: usize, step: usize, reward: f64, done: bool) -> SampleRecord {
        SampleRecord {
            episode,
            step,
            features: vec![],
            trace: IntentionTrace {
                actions: vec![vec![0]],
                log_probs: vec![],
                fractions: vec![vec![0.0]],
            },
            shared_reward: reward,
            per_agent_rewards: vec![reward],
            done,
            return_to_go: 0.0,
            per_agent_returns: vec![],
            h0: None,
            q_values: vec![],
            advantages: vec![],
        }
    }

    #[test]
    fn undiscounted_returns_are_suffix_sums() {
        let mut buffer = RolloutBuffer {
            samples: vec![
                sample(0, 1, 1.0, false),
                sample(0, 2, 1.0, false),
                sample(0, 3, 1.0, true),
            ],
            n_episodes: 1,
        };
        compute_returns(&mut buffer, 1.0);
        let g: Vec<f64> = buffer.samples.iter().map(|s| s.return_to_go).collect();
        assert_eq!(g, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn returns_respect_episode_boundaries() {
        let mut buffer = RolloutBuffer {
            samples: vec![
                sample(0, 1, 1.0, false),
                sample(0, 2, 2.0, true),
                sample(1, 1, 10.0, true),
            ],
            n_episodes: 2,
        };
        compute_returns(&mut buffer, 0.5);
        assert_eq!(buffer.samples[0].return_to_go, 2.0); // 1 + 0.5*2
        assert_eq!(buffer.samples[1].return_to_go, 2.0);
        assert_eq!(buffer.samples[2].return_to_go, 10.0);
    }

    #[test]
    fn extend_reindexes_episodes() {
        let mut a = RolloutBuffer {
            samples: vec![sample(0, 1, 0.0, true)],
            n_episodes: 1,
        };
        let b = RolloutBuffer {
            samples: vec![sample(0, 1, 0.0, true), sample(1, 1, 0.0, true)],
            n_episodes: 2,
        };
        a.extend(b);
        let eps: Vec<usize> = a.samples.iter().map(|s| s.episode).collect();
        assert_eq!(eps, vec![0, 1, 2]);
        assert_eq!(a.n_episodes, 3);
    }
}
