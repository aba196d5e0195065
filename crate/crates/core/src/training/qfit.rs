//! Action-value regression on collected trajectories.
//!
//! Q-hat(h_0, a_K) is regressed onto realized returns-to-go by MSE, using
//! only the actions actually executed. The extractor output h_0 is computed
//! once per sample under the current parameters and treated as an input
//! here; gradients flow only into the value head. The joint loss inside the
//! PPO update keeps the extractor itself value-aware.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, GradAccum, Graph, Tensor};
use crate::policy::PolicyNetwork;
use crate::rng::stream;
use crate::training::buffer::RolloutBuffer;
use crate::training::config::TrainConfig;

/// Fill `sample.h0` for every sample that lacks it.
pub fn compute_h0(network: &PolicyNetwork, buffer: &mut RolloutBuffer) -> Result<()> {
    for s in &mut buffer.samples {
        if s.h0.is_none() {
            s.h0 = Some(network.extract_values(&s.features)?);
        }
    }
    Ok(())
}

/// Fit the value head for `epochs` passes over the buffer; returns the mean
/// squared error per epoch (computed before that epoch's updates).
pub fn fit_q_estimator(
    network: &mut PolicyNetwork,
    buffer: &mut RolloutBuffer,
    config: &TrainConfig,
    cycle: u64,
) -> Result<Vec<f64>> {
    if buffer.is_empty() {
        return Err(Error::validation("fit_q_estimator on an empty buffer"));
    }
    compute_h0(network, buffer)?;
    let adam = AdamConfig::with_lr(config.lr);
    let mut losses = Vec::with_capacity(config.q_fit_epochs);
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    for epoch in 0..config.q_fit_epochs {
        let mut rng = stream(config.seed, "qfit-shuffle", cycle << 8 | epoch as u64);
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let mut grads = GradAccum::new(&network.store);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let sample = &buffer.samples[idx];
                let mut g = Graph::new();
                let h0 = g.input(sample.h0.clone().expect("h0 computed above"));
                let q = network.qhat(&mut g, h0, sample.trace.final_actions())?;
                let target = g.input(Tensor::scalar(sample.return_to_go));
                let diff = g.sub(q, target)?;
                let loss = g.square(diff);
                epoch_loss += g.value(loss).item();
                seen += 1;
                let grad = g.backward(loss)?;
                grads.add_from_graph(&g, &grad, scale);
            }
            network.store.adam_step(&grads, &adam)?;
        }
        losses.push(epoch_loss / seen as f64);
    }
    Ok(losses)
}
