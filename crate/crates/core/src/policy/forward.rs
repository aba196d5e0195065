//! Observation featurization, action legalization and the per-timestep
//! intention trace.

use serde::{Deserialize, Serialize};

use crate::env::AgentObservation;
use crate::nn::Tensor;

/// Extractor inputs for one agent: the (windowed) per-minute market
/// features and the four summary scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsFeatures {
    /// Per minute: [normalized price, normalized volume].
    pub market: Vec<[f64; 2]>,
    /// [elapsed_fraction, direction, cumulative traded fraction, normalized cash].
    pub scalars: [f64; 4],
}

impl ObsFeatures {
    pub fn from_observation(obs: &AgentObservation, window: Option<usize>) -> Self {
        let len = obs.price_history.len();
        let start = match window {
            Some(w) => len.saturating_sub(w),
            None => 0,
        };
        let market = (start..len)
            .map(|i| [obs.price_history[i], obs.volume_history[i]])
            .collect();
        ObsFeatures {
            market,
            scalars: [
                obs.elapsed_fraction,
                f64::from(obs.direction),
                obs.cumulative_traded(),
                obs.normalized_cash(),
            ],
        }
    }
}

/// Stack per-agent features into per-minute [n,2] matrices plus one [n,4]
/// scalar matrix. All agents of a timestep share the history length.
pub(crate) fn batch_features(features: &[ObsFeatures]) -> (Vec<Tensor>, Tensor) {
    let n = features.len();
    let len = features[0].market.len();
    debug_assert!(features.iter().all(|f| f.market.len() == len));
    let mut steps = Vec::with_capacity(len);
    for m in 0..len {
        let mut data = Vec::with_capacity(n * 2);
        for f in features {
            data.extend_from_slice(&f.market[m]);
        }
        steps.push(Tensor::new(n, 2, data).unwrap());
    }
    let mut scalars = Vec::with_capacity(n * 4);
    for f in features {
        scalars.extend_from_slice(&f.scalars);
    }
    (steps, Tensor::new(n, 4, scalars).unwrap())
}

/// Everything needed to legalize an intended action against the execution
/// state: the remaining fraction per agent and whether this is the final
/// step (where the proposal is overridden by the remainder).
#[derive(Debug, Clone)]
pub struct LegalizeContext {
    pub remaining: Vec<f64>,
    pub final_step: bool,
    pub action_fractions: Vec<f64>,
}

impl LegalizeContext {
    /// A context that never restricts (used for probes and tests).
    pub fn unrestricted(n: usize, action_fractions: &[f64]) -> Self {
        LegalizeContext {
            remaining: vec![1.0; n],
            final_step: false,
            action_fractions: action_fractions.to_vec(),
        }
    }

    pub fn from_env(env: &crate::env::ExecutionEnv) -> Self {
        LegalizeContext {
            remaining: (0..env.n_agents()).map(|i| env.remaining_fraction(i)).collect(),
            final_step: env.current_step() >= env.config().timesteps_t,
            action_fractions: env.config().action_fractions.clone(),
        }
    }

    /// Largest grid index whose fraction does not exceed the legal target.
    pub fn legal_index(&self, agent: usize, proposed: usize) -> usize {
        let target = if self.final_step {
            self.remaining[agent]
        } else {
            self.action_fractions[proposed].min(self.remaining[agent])
        };
        let mut best = 0;
        for (i, &f) in self.action_fractions.iter().enumerate() {
            if f <= target + 1e-12 {
                best = i;
            } else {
                break;
            }
        }
        best
    }
}

/// Record of one timestep's intention refinement: intended actions per
/// round (row 0 is the dummy), log-probabilities of the recorded actions,
/// and the corresponding grid fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionTrace {
    /// (rounds+1) x n action indices; row 0 is the dummy zero-fraction action.
    pub actions: Vec<Vec<usize>>,
    /// rounds x n log-probabilities of the recorded (legalized) actions.
    pub log_probs: Vec<Vec<f64>>,
    /// (rounds+1) x n grid fractions of the intended actions.
    pub fractions: Vec<Vec<f64>>,
}

impl IntentionTrace {
    pub fn rounds(&self) -> usize {
        self.log_probs.len()
    }

    pub fn n_agents(&self) -> usize {
        self.actions[0].len()
    }

    /// The actions submitted to the environment.
    pub fn final_actions(&self) -> &[usize] {
        self.actions.last().unwrap()
    }

    /// Mean |a_k - a_{k-1}| of intended fractions between consecutive
    /// decision rounds, for k = 2..rounds. Empty when rounds < 2.
    pub fn round_differences(&self) -> Vec<f64> {
        let n = self.n_agents() as f64;
        (2..=self.rounds())
            .map(|k| {
                self.fractions[k]
                    .iter()
                    .zip(&self.fractions[k - 1])
                    .map(|(&a, &b)| (a - b).abs())
                    .sum::<f64>()
                    / n
            })
            .collect()
    }
}
