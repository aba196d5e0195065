//! On-policy rollout collection.
//!
//! Episodes are sampled from the training split with a seeded stream and
//! played in Sample mode; the final intended actions drive the environment.
//! Collection may fan out over workers, each with its own RNG streams;
//! per-worker buffers are concatenated in worker order so any fixed worker
//! count is deterministic.

use chrono::NaiveDate;
use rand::Rng;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::market::{OrderSet, TradingDayData};
use crate::parallel::map_ordered;
use crate::policy::{DecisionMode, LegalizeContext, ObsFeatures, PolicyNetwork};
use crate::rng::stream;
use crate::training::buffer::{RolloutBuffer, SampleRecord};

/// Collect at least `n_steps` environment steps of complete episodes.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    network: &PolicyNetwork,
    dataset: &[TradingDayData],
    order_sets: &[OrderSet],
    dates: &[NaiveDate],
    env_config: &EnvConfig,
    n_steps: usize,
    seed: u64,
    cycle: u64,
    workers: usize,
) -> Result<RolloutBuffer> {
    if n_steps == 0 {
        return Ok(RolloutBuffer::default());
    }
    let episodes = crate::evaluation::select_episodes(dataset, order_sets, dates)?;
    let workers = workers.max(1);
    let quota = n_steps.div_ceil(workers);
    let worker_ids: Vec<u64> = (0..workers as u64).collect();
    let buffers = map_ordered(&worker_ids, workers, |_, &worker| {
        collect_worker(network, &episodes, env_config, quota, seed, cycle, worker)
    });
    let mut out = RolloutBuffer::default();
    for b in buffers {
        out.extend(b?);
    }
    Ok(out)
}

fn collect_worker(
    network: &PolicyNetwork,
    episodes: &[(&OrderSet, &TradingDayData)],
    env_config: &EnvConfig,
    quota: usize,
    seed: u64,
    cycle: u64,
    worker: u64,
) -> Result<RolloutBuffer> {
    let mut pick_rng = stream(seed, "rollout-pick", cycle << 16 | worker);
    let mut buffer = RolloutBuffer::default();
    let mut episode_idx = 0usize;
    while buffer.len() < quota {
        let choice = pick_rng.gen_range(0..episodes.len());
        let (set, day) = episodes[choice];
        let mut act_rng = stream(
            seed,
            "rollout-act",
            (cycle << 32) | (worker << 24) | episode_idx as u64,
        );
        let (mut env, mut observations) = crate::env::reset(set, day, env_config)?;
        let rounds = network.config.effective_rounds();
        let mut step = 1usize;
        while !env.done() {
            let features: Vec<ObsFeatures> = observations
                .iter()
                .map(|o| ObsFeatures::from_observation(o, network.config.market_window))
                .collect();
            let ctx = LegalizeContext::from_env(&env);
            let (trace, _) = network.forward_timestep(
                &features,
                DecisionMode::Sample,
                Some(&mut act_rng),
                &ctx,
                rounds,
            )?;
            let result = env.step(trace.final_actions())?;
            buffer.samples.push(SampleRecord {
                episode: episode_idx,
                step,
                features,
                trace,
                shared_reward: result.shared_reward,
                per_agent_rewards: result.per_agent_rewards.clone(),
                done: result.done,
                return_to_go: 0.0,
                per_agent_returns: vec![],
                h0: None,
                q_values: vec![],
                advantages: vec![],
            });
            observations = result.observations.unwrap_or_default();
            step += 1;
        }
        episode_idx += 1;
    }
    buffer.n_episodes = episode_idx;
    Ok(buffer)
}
