//! Running policies and baselines over a split and aggregating metrics.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline_episode, ACParams, BaselineKind, VolumeProfile};
use crate::env::{EnvConfig, EpisodeAccounting};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{aggregate_metrics, execution_gain, toc, MetricsReport};
use crate::market::{OrderSet, TradingDayData};
use crate::parallel::map_ordered;
use crate::policy::{DecisionMode, IntentionTrace, LegalizeContext, PolicyNetwork};
use crate::policy::ObsFeatures;

/// Pair each order set with its trading day, keeping only the given dates.
pub fn select_episodes<'a>(
    dataset: &'a [TradingDayData],
    order_sets: &'a [OrderSet],
    dates: &[NaiveDate],
) -> Result<Vec<(&'a OrderSet, &'a TradingDayData)>> {
    let mut out = Vec::new();
    for set in order_sets.iter().filter(|s| dates.contains(&s.date)) {
        let day = dataset
            .iter()
            .find(|d| d.date == set.date)
            .ok_or_else(|| Error::validation(format!("no market data for {}", set.date)))?;
        out.push((set, day));
    }
    if out.is_empty() {
        return Err(Error::validation("no order sets in the requested dates"));
    }
    Ok(out)
}

/// Play one episode with the policy driving the environment. `rounds`
/// selects which intention round's actions are executed (the final round in
/// normal evaluation). Returns the accounting plus all per-step traces.
pub fn run_policy_episode(
    network: &PolicyNetwork,
    order_set: &OrderSet,
    day: &TradingDayData,
    env_config: &EnvConfig,
    mode: DecisionMode,
    rng: Option<&mut rand_chacha::ChaCha12Rng>,
    rounds: usize,
) -> Result<(EpisodeAccounting, Vec<IntentionTrace>)> {
    if env_config.action_count() != network.config.action_count {
        return Err(Error::validation(format!(
            "policy expects {} actions, env has {}",
            network.config.action_count,
            env_config.action_count()
        )));
    }
    let (mut env, mut observations) = crate::env::reset(order_set, day, env_config)?;
    let mut traces = Vec::with_capacity(env_config.timesteps_t);
    let mut rng = rng;
    while !env.done() {
        let features: Vec<ObsFeatures> = observations
            .iter()
            .map(|o| ObsFeatures::from_observation(o, network.config.market_window))
            .collect();
        let ctx = LegalizeContext::from_env(&env);
        let (trace, _) =
            network.forward_timestep(&features, mode, rng.as_deref_mut(), &ctx, rounds)?;
        let result = env.step(trace.final_actions())?;
        observations = result.observations.unwrap_or_default();
        traces.push(trace);
    }
    Ok((env.accounting()?, traces))
}

/// Evaluate a policy greedily over every order set in the split.
pub fn evaluate_policy(
    network: &PolicyNetwork,
    dataset: &[TradingDayData],
    order_sets: &[OrderSet],
    dates: &[NaiveDate],
    env_config: &EnvConfig,
    config_digest: String,
    workers: usize,
) -> Result<MetricsReport> {
    let episodes = select_episodes(dataset, order_sets, dates)?;
    let rounds = network.config.effective_rounds();
    let results = map_ordered(&episodes, workers, |_, (set, day)| {
        run_policy_episode(network, set, day, env_config, DecisionMode::Greedy, None, rounds)
            .map(|(acc, _)| (set.date, acc))
    });
    let episodes: Result<Vec<(NaiveDate, EpisodeAccounting)>> = results.into_iter().collect();
    aggregate_metrics(&episodes?, config_digest)
}

/// Evaluate a baseline schedule over the split through the same environment.
pub fn evaluate_baseline(
    kind: BaselineKind,
    dataset: &[TradingDayData],
    order_sets: &[OrderSet],
    dates: &[NaiveDate],
    env_config: &EnvConfig,
    profile: Option<&VolumeProfile>,
    ac_params: &ACParams,
    config_digest: String,
    workers: usize,
) -> Result<MetricsReport> {
    let episodes = select_episodes(dataset, order_sets, dates)?;
    let results = map_ordered(&episodes, workers, |_, (set, day)| {
        run_baseline_episode(kind, set, day, env_config, profile, ac_params)
            .map(|acc| (set.date, acc))
    });
    let episodes: Result<Vec<(NaiveDate, EpisodeAccounting)>> = results.into_iter().collect();
    aggregate_metrics(&episodes?, config_digest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub eg_bp: f64,
    pub toc_pct: f64,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundwiseReport {
    pub per_round: Vec<RoundMetrics>,
}

/// Execute each round's intended actions as the final actions and report
/// EG/TOC per round (the full report for round K equals `evaluate_policy`).
pub fn evaluate_rounds(
    network: &PolicyNetwork,
    dataset: &[TradingDayData],
    order_sets: &[OrderSet],
    dates: &[NaiveDate],
    env_config: &EnvConfig,
    workers: usize,
) -> Result<RoundwiseReport> {
    let total_rounds = network.config.effective_rounds();
    if total_rounds < 2 {
        return Err(Error::validation("round-wise evaluation needs rounds_k >= 2"));
    }
    let episodes = select_episodes(dataset, order_sets, dates)?;
    let mut per_round = Vec::with_capacity(total_rounds);
    for k in 1..=total_rounds {
        let results = map_ordered(&episodes, workers, |_, (set, day)| {
            run_policy_episode(network, set, day, env_config, DecisionMode::Greedy, None, k)
                .map(|(acc, _)| (set.date, acc))
        });
        let episodes: Result<Vec<(NaiveDate, EpisodeAccounting)>> = results.into_iter().collect();
        let report = aggregate_metrics(&episodes?, String::new())?;
        per_round.push(RoundMetrics {
            round: k,
            eg_bp: report.eg_bp,
            toc_pct: report.toc_pct,
            violation_rate: report.violation_rate,
        });
    }
    Ok(RoundwiseReport { per_round })
}

/// Mean |a_k - a_{k-1}| of intended fractions between consecutive rounds,
/// averaged over all timesteps of all episodes; length rounds-1.
pub fn round_convergence(
    network: &PolicyNetwork,
    dataset: &[TradingDayData],
    order_sets: &[OrderSet],
    dates: &[NaiveDate],
    env_config: &EnvConfig,
    workers: usize,
) -> Result<Vec<f64>> {
    let rounds = network.config.effective_rounds();
    if rounds < 2 {
        return Err(Error::validation("round convergence needs rounds_k >= 2"));
    }
    let episodes = select_episodes(dataset, order_sets, dates)?;
    let results = map_ordered(&episodes, workers, |_, (set, day)| {
        run_policy_episode(network, set, day, env_config, DecisionMode::Greedy, None, rounds)
            .map(|(_, traces)| traces)
    });
    let mut sums = vec![0.0; rounds - 1];
    let mut count = 0usize;
    for traces in results {
        for trace in traces? {
            for (s, d) in sums.iter_mut().zip(trace.round_differences()) {
                *s += d;
            }
            count += 1;
        }
    }
    Ok(sums.iter().map(|s| s / count as f64).collect())
}

/// EG/TOC summary of a set of episodes, used by the trainer's validation
/// hook (cheaper than the full report).
pub fn quick_eval(
    network: &PolicyNetwork,
    episodes: &[(&OrderSet, &TradingDayData)],
    env_config: &EnvConfig,
    workers: usize,
) -> Result<(f64, f64)> {
    let rounds = network.config.effective_rounds();
    let results = map_ordered(episodes, workers, |_, (set, day)| {
        run_policy_episode(network, set, day, env_config, DecisionMode::Greedy, None, rounds)
            .map(|(acc, _)| acc)
    });
    let accs: Result<Vec<EpisodeAccounting>> = results.into_iter().collect();
    let accs = accs?;
    let mut egs = Vec::new();
    for acc in &accs {
        for agent in &acc.per_agent {
            if let Ok(aep) = agent.aep() {
                egs.push(execution_gain(aep, agent.day_avg_price, agent.direction));
            }
        }
    }
    let eg = if egs.is_empty() {
        0.0
    } else {
        egs.iter().sum::<f64>() / egs.len() as f64
    };
    Ok((eg, toc(&accs)))
}
