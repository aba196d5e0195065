//! Episode engine: legalization, intra-step execution, cash cutoff, rewards.

use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::env::observation::AgentObservation;
use crate::error::{Error, Result};
use crate::market::{OrderSet, OrderSpec, TradingDayData};
use crate::numeric::allocate_exact;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    /// Execution gain term: d * a_exec * (p_exec / p_avg - 1).
    pub r_exec: f64,
    /// Market-impact penalty: -alpha * a_exec^2.
    pub r_impact: f64,
    /// Cash-exhaustion penalty: -sigma when the balance hits zero this step.
    pub r_cash: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.r_exec + self.r_impact + self.r_cash
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    /// Executed fraction q/M per agent for this step.
    pub executed_fractions: Vec<f64>,
    /// Step execution price per agent; 0 when nothing traded.
    pub exec_prices: Vec<f64>,
    pub reward_terms: Vec<RewardTerms>,
    pub per_agent_rewards: Vec<f64>,
    /// Mean of the per-agent rewards.
    pub shared_reward: f64,
    /// Observations for the next step; `None` once the episode is done.
    pub observations: Option<Vec<AgentObservation>>,
    pub done: bool,
    /// The cash cutoff scaled acquisition volumes this step.
    pub cash_conflict: bool,
    /// An acquisition was left under-filled by the final-step cutoff.
    pub fulfillment_violation: bool,
    pub cash_after: f64,
}

/// Everything recorded about one agent over a finished episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentAccounting {
    pub asset: String,
    pub direction: i8,
    pub amount: f64,
    /// Unweighted mean of the asset's minute prices over the day.
    pub day_avg_price: f64,
    /// Executed shares per step.
    pub step_volumes: Vec<f64>,
    /// Volume-weighted execution price per step (0 when nothing traded).
    pub step_prices: Vec<f64>,
    pub fulfillment_violation: bool,
}

impl AgentAccounting {
    pub fn executed_volume(&self) -> f64 {
        self.step_volumes.iter().sum()
    }

    /// Average execution price over executed volume. Errors when the order
    /// traded nothing at all.
    pub fn aep(&self) -> Result<f64> {
        let volume = self.executed_volume();
        if volume <= 0.0 {
            return Err(Error::Numeric(format!(
                "order on {} executed zero volume",
                self.asset
            )));
        }
        let value: f64 = self
            .step_volumes
            .iter()
            .zip(&self.step_prices)
            .map(|(&q, &p)| p * q)
            .sum();
        Ok(value / volume)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeAccounting {
    /// c_0..c_T.
    pub cash_history: Vec<f64>,
    /// Cutoff flag per executed step.
    pub conflicts: Vec<bool>,
    pub per_agent: Vec<AgentAccounting>,
    pub timesteps_t: usize,
}

impl EpisodeAccounting {
    /// Fraction of steps (t = 1..T) with cash exactly zero.
    pub fn zero_cash_fraction(&self) -> f64 {
        let zeros = self.cash_history[1..].iter().filter(|&&c| c == 0.0).count();
        zeros as f64 / self.timesteps_t as f64
    }

    pub fn any_violation(&self) -> bool {
        self.per_agent.iter().any(|a| a.fulfillment_violation)
    }
}

struct AgentState {
    spec: OrderSpec,
    day_avg_price: f64,
    remaining_shares: f64,
    cumulative_fraction: f64,
    step_volumes: Vec<f64>,
    step_prices: Vec<f64>,
    executed_fraction_history: Vec<f64>,
    fulfillment_violation: bool,
}

pub struct ExecutionEnv {
    config: EnvConfig,
    day: TradingDayData,
    step_minutes: usize,
    /// Next step to execute, 1-based.
    t: usize,
    c0: f64,
    cash_history: Vec<f64>,
    conflicts: Vec<bool>,
    agents: Vec<AgentState>,
}

/// Build a fresh episode and return its initial observations.
pub fn reset(
    order_set: &OrderSet,
    day: &TradingDayData,
    config: &EnvConfig,
) -> Result<(ExecutionEnv, Vec<AgentObservation>)> {
    let env = ExecutionEnv::new(order_set, day, config)?;
    let obs = env.observations();
    Ok((env, obs))
}

impl ExecutionEnv {
    pub fn new(order_set: &OrderSet, day: &TradingDayData, config: &EnvConfig) -> Result<Self> {
        config.validate()?;
        order_set.validate_against(day)?;
        if day.minutes_per_day % config.timesteps_t != 0 {
            return Err(Error::validation(format!(
                "{} minutes not divisible into {} steps",
                day.minutes_per_day, config.timesteps_t
            )));
        }
        let step_minutes = day.minutes_per_day / config.timesteps_t;
        let agents = order_set
            .orders
            .iter()
            .map(|spec| {
                let asset = day.asset(&spec.asset).expect("validated above");
                AgentState {
                    day_avg_price: asset.day_average_price(),
                    remaining_shares: spec.amount,
                    cumulative_fraction: 0.0,
                    step_volumes: Vec::with_capacity(config.timesteps_t),
                    step_prices: Vec::with_capacity(config.timesteps_t),
                    executed_fraction_history: Vec::with_capacity(config.timesteps_t),
                    fulfillment_violation: false,
                    spec: spec.clone(),
                }
            })
            .collect();
        Ok(ExecutionEnv {
            config: config.clone(),
            day: day.clone(),
            step_minutes,
            t: 1,
            c0: order_set.initial_cash,
            cash_history: vec![order_set.initial_cash],
            conflicts: Vec::with_capacity(config.timesteps_t),
            agents,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn done(&self) -> bool {
        self.t > self.config.timesteps_t
    }

    /// Current step, 1-based; valid while not done.
    pub fn current_step(&self) -> usize {
        self.t
    }

    pub fn cash(&self) -> f64 {
        *self.cash_history.last().unwrap()
    }

    pub fn directions(&self) -> Vec<i8> {
        self.agents.iter().map(|a| a.spec.direction).collect()
    }

    /// The legal executed fraction for a proposal: `min(proposal, remaining)`
    /// before the final step, exactly the remaining fraction at it.
    pub fn legal_fraction(&self, agent: usize, proposed: f64) -> f64 {
        let remaining = (1.0 - self.agents[agent].cumulative_fraction).max(0.0);
        if self.t >= self.config.timesteps_t {
            remaining
        } else {
            proposed.clamp(0.0, remaining)
        }
    }

    /// Remaining fraction of the order, used to legalize intended actions.
    pub fn remaining_fraction(&self, agent: usize) -> f64 {
        (1.0 - self.agents[agent].cumulative_fraction).max(0.0)
    }

    pub fn observations(&self) -> Vec<AgentObservation> {
        self.agents
            .iter()
            .map(|a| {
                AgentObservation::build(
                    self.day.asset(&a.spec.asset).unwrap(),
                    a.spec.direction,
                    self.t,
                    self.config.timesteps_t,
                    self.step_minutes,
                    &self.cash_history,
                    self.c0,
                    &a.executed_fraction_history,
                )
            })
            .collect()
    }

    /// Step with one action index per agent (the learned-policy path):
    /// fractions are legalized, spread evenly over the step's minutes, then
    /// run through the cash constraint.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        self.ensure_live(actions.len())?;
        let n_actions = self.config.action_count();
        for &a in actions {
            if a >= n_actions {
                return Err(Error::validation(format!(
                    "action index {a} out of range 0..{n_actions}"
                )));
            }
        }
        let fractions: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(i, &a)| self.legal_fraction(i, self.config.action_fractions[a]))
            .collect();
        self.step_legal_fractions(&fractions)
    }

    /// Step with already-legalized fractions, spread evenly within the step.
    fn step_legal_fractions(&mut self, fractions: &[f64]) -> Result<StepResult> {
        let uniform = vec![1.0; self.step_minutes];
        let allocations: Vec<Vec<f64>> = fractions
            .iter()
            .zip(&self.agents)
            .map(|(&f, agent)| {
                // The final step trades the exact remaining shares so the
                // order closes with no residue.
                let volume = if self.t >= self.config.timesteps_t {
                    agent.remaining_shares
                } else {
                    (f * agent.spec.amount).min(agent.remaining_shares)
                };
                allocate_exact(volume, &uniform)
            })
            .collect();
        self.step_with_allocations(&allocations)
    }

    /// Step with explicit per-minute volumes per agent (the baseline path).
    /// Each allocation must have `step_minutes` entries; the cash constraint
    /// still applies at step granularity, scaling the whole step's
    /// acquisition allocation uniformly.
    pub fn step_with_allocations(&mut self, allocations: &[Vec<f64>]) -> Result<StepResult> {
        self.ensure_live(allocations.len())?;
        let minute_base = (self.t - 1) * self.step_minutes;
        let n = self.agents.len();
        for alloc in allocations {
            if alloc.len() != self.step_minutes {
                return Err(Error::validation(format!(
                    "allocation has {} minutes, step has {}",
                    alloc.len(),
                    self.step_minutes
                )));
            }
            if alloc.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::validation("minute volumes must be non-negative"));
            }
        }

        // Value each agent's step at its minute prices.
        let mut volumes: Vec<f64> = Vec::with_capacity(n);
        let mut values: Vec<f64> = Vec::with_capacity(n);
        for (agent, alloc) in self.agents.iter().zip(allocations) {
            let prices = &self.day.asset(&agent.spec.asset).unwrap().prices;
            let mut volume = 0.0;
            let mut value = 0.0;
            for (m, &v) in alloc.iter().enumerate() {
                volume += v;
                value += v * prices[minute_base + m];
            }
            volumes.push(volume);
            values.push(value);
        }

        // Shared cash constraint: same-step liquidation inflow may fund
        // same-step acquisitions; if demand still exceeds supply every
        // acquisition is scaled so the balance lands exactly at zero.
        let cash_before = self.cash();
        let inflow: f64 = self
            .agents
            .iter()
            .zip(&values)
            .filter(|(a, _)| a.spec.is_liquidation())
            .map(|(_, &v)| v)
            .sum();
        let outflow: f64 = self
            .agents
            .iter()
            .zip(&values)
            .filter(|(a, _)| !a.spec.is_liquidation())
            .map(|(_, &v)| v)
            .sum();
        let available = cash_before + inflow;
        let (scale, conflict, cash_after) = if outflow > available {
            (if outflow > 0.0 { available / outflow } else { 0.0 }, true, 0.0)
        } else {
            (1.0, false, available - outflow)
        };
        debug_assert!(cash_after >= 0.0);

        let final_step = self.t >= self.config.timesteps_t;
        let mut executed_fractions = Vec::with_capacity(n);
        let mut exec_prices = Vec::with_capacity(n);
        let mut reward_terms = Vec::with_capacity(n);
        let mut per_agent_rewards = Vec::with_capacity(n);
        let mut violation_this_step = false;

        let cash_penalty = if cash_after == 0.0 && cash_before > 0.0 {
            -self.config.sigma
        } else {
            0.0
        };

        for (agent, (&volume, &value)) in self
            .agents
            .iter_mut()
            .zip(volumes.iter().zip(values.iter()))
        {
            let acquis = !agent.spec.is_liquidation();
            let (volume, value) = if acquis && scale < 1.0 {
                (volume * scale, value * scale)
            } else {
                (volume, value)
            };
            let exec_price = if volume > 0.0 { value / volume } else { 0.0 };
            let exec_fraction = volume / agent.spec.amount;

            agent.remaining_shares = (agent.remaining_shares - volume).max(0.0);
            agent.cumulative_fraction += exec_fraction;
            agent.step_volumes.push(volume);
            agent.step_prices.push(exec_price);
            agent.executed_fraction_history.push(exec_fraction);
            if final_step && agent.remaining_shares > 0.0 {
                agent.fulfillment_violation = true;
                violation_this_step = true;
            }

            let r_exec = f64::from(agent.spec.direction)
                * exec_fraction
                * (exec_price / agent.day_avg_price - 1.0);
            let r_exec = if volume > 0.0 { r_exec } else { 0.0 };
            let terms = RewardTerms {
                r_exec,
                r_impact: -self.config.alpha * exec_fraction * exec_fraction,
                r_cash: cash_penalty,
            };
            reward_terms.push(terms);
            per_agent_rewards.push(terms.total());
            executed_fractions.push(exec_fraction);
            exec_prices.push(exec_price);
        }

        self.cash_history.push(cash_after);
        self.conflicts.push(conflict);
        self.t += 1;

        let shared_reward = per_agent_rewards.iter().sum::<f64>() / n as f64;
        let done = self.done();
        Ok(StepResult {
            executed_fractions,
            exec_prices,
            reward_terms,
            per_agent_rewards,
            shared_reward,
            observations: if done { None } else { Some(self.observations()) },
            done,
            cash_conflict: conflict,
            fulfillment_violation: violation_this_step,
            cash_after,
        })
    }

    fn ensure_live(&self, n_actions: usize) -> Result<()> {
        if self.done() {
            return Err(Error::validation("step called after episode end"));
        }
        if n_actions != self.agents.len() {
            return Err(Error::validation(format!(
                "got {} actions for {} agents",
                n_actions,
                self.agents.len()
            )));
        }
        Ok(())
    }

    /// Average execution price of one finished order.
    pub fn episode_aep(&self, agent: usize) -> Result<f64> {
        if !self.done() {
            return Err(Error::validation("episode_aep before episode end"));
        }
        self.accounting_for(agent).aep()
    }

    fn accounting_for(&self, agent: usize) -> AgentAccounting {
        let a = &self.agents[agent];
        AgentAccounting {
            asset: a.spec.asset.clone(),
            direction: a.spec.direction,
            amount: a.spec.amount,
            day_avg_price: a.day_avg_price,
            step_volumes: a.step_volumes.clone(),
            step_prices: a.step_prices.clone(),
            fulfillment_violation: a.fulfillment_violation,
        }
    }

    /// Full episode record; valid once done.
    pub fn accounting(&self) -> Result<EpisodeAccounting> {
        if !self.done() {
            return Err(Error::validation("accounting before episode end"));
        }
        Ok(EpisodeAccounting {
            cash_history: self.cash_history.clone(),
            conflicts: self.conflicts.clone(),
            per_agent: (0..self.agents.len()).map(|i| self.accounting_for(i)).collect(),
            timesteps_t: self.config.timesteps_t,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{
        generate_order_sets, generate_synthetic_market, OrderGenParams, SyntheticMarketConfig,
    };
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    /// A tiny flat-price day: 8 minutes, 2 steps of 4 minutes.
    fn flat_day(price: f64) -> TradingDayData {
        let mut assets = BTreeMap::new();
        for id in ["AAA", "BBB"] {
            assets.insert(
                id.to_string(),
                crate::market::AssetDay {
                    asset_id: id.to_string(),
                    prices: vec![price; 8],
                    volumes: vec![100.0; 8],
                },
            );
        }
        TradingDayData {
            date: NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(),
            minutes_per_day: 8,
            assets,
        }
    }

    fn small_config(t: usize) -> EnvConfig {
        EnvConfig {
            timesteps_t: t,
            ..EnvConfig::default()
        }
    }

    fn order(asset: &str, direction: i8, amount: f64) -> OrderSpec {
        OrderSpec {
            asset: asset.to_string(),
            direction,
            amount,
        }
    }

    #[test]
    fn reset_returns_one_observation_per_order() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 100.0,
            orders: vec![order("AAA", 1, 10.0), order("BBB", -1, 5.0)],
        };
        let (_, obs) = reset(&set, &day, &small_config(2)).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].elapsed_fraction, 0.5); // 1/T with T=2
        assert!(obs[0].price_history.is_empty()); // nothing visible at t=1
    }

    #[test]
    fn zero_cash_all_liquidation_is_valid() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 0.0,
            orders: vec![order("AAA", 1, 10.0)],
        };
        reset(&set, &day, &small_config(2)).unwrap();
    }

    #[test]
    fn missing_asset_is_an_error() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 10.0,
            orders: vec![order("ZZZ", 1, 10.0)],
        };
        assert!(reset(&set, &day, &small_config(2)).is_err());
    }

    #[test]
    fn legal_fraction_rules() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 1000.0,
            orders: vec![order("AAA", 1, 100.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        // t=1 < T: 0.75 executed
        let r = env.step(&[3]).unwrap();
        assert_eq!(r.executed_fractions[0], 0.75);
        // t=T: proposal ignored, remainder (0.25) executed
        assert_eq!(env.legal_fraction(0, 0.5), 0.25);
        let r = env.step(&[0]).unwrap();
        assert!((r.executed_fractions[0] - 0.25).abs() < 1e-15);
        assert!(r.done);
    }

    #[test]
    fn exhausted_order_gets_zero() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 1000.0,
            orders: vec![order("AAA", 1, 100.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(4)).unwrap();
        env.step(&[4]).unwrap(); // everything at once
        assert_eq!(env.legal_fraction(0, 0.5), 0.0);
        let r = env.step(&[2]).unwrap();
        assert_eq!(r.executed_fractions[0], 0.0);
    }

    #[test]
    fn cash_cutoff_scales_to_half() {
        // Acquisition demanding exactly twice the available cash, no inflow.
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 500.0,
            orders: vec![order("AAA", -1, 100.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        let r = env.step(&[4]).unwrap(); // 100 shares @ 10 = 1000 = 2x cash
        assert!(r.cash_conflict);
        assert_eq!(r.executed_fractions[0], 0.5);
        assert_eq!(r.cash_after, 0.0);
        assert_eq!(env.cash(), 0.0);
    }

    #[test]
    fn inflow_funds_same_step_acquisition() {
        // cash 100, inflow 100, outflow 300 -> scale 2/3, cash 0, conflict.
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 100.0,
            orders: vec![order("AAA", 1, 10.0), order("BBB", -1, 30.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        let r = env.step(&[4, 4]).unwrap();
        assert!(r.cash_conflict);
        assert_eq!(r.cash_after, 0.0);
        assert!((r.executed_fractions[1] - 2.0 / 3.0).abs() < 1e-12);
        // liquidation always fully executes
        assert_eq!(r.executed_fractions[0], 1.0);
    }

    #[test]
    fn no_outflow_executes_fully() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 0.0,
            orders: vec![order("AAA", 1, 10.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        let r = env.step(&[4]).unwrap();
        assert!(!r.cash_conflict);
        assert_eq!(r.executed_fractions[0], 1.0);
    }

    #[test]
    fn reward_terms_hand_case() {
        // d=+1, executed fraction 0.25, p_exec/p_avg = 1.02, alpha=0.01:
        // R_e = 0.25 * 0.02 = 0.005, R_a = -0.01 * 0.0625 = -0.000625.
        let mut day = flat_day(10.0);
        {
            // First step's minutes at 10.2, rest at 10.0 won't give a day
            // mean of 10; instead set all of step 1 to 10.2 and adjust the
            // remaining minutes so the day mean is exactly 10.
            let asset = day.assets.get_mut("AAA").unwrap();
            for m in 0..4 {
                asset.prices[m] = 10.2;
            }
            for m in 4..8 {
                asset.prices[m] = 9.8;
            }
        }
        let set = OrderSet {
            date: day.date,
            initial_cash: 1000.0,
            orders: vec![order("AAA", 1, 100.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        let r = env.step(&[1]).unwrap(); // 0.25
        let terms = r.reward_terms[0];
        assert!((terms.r_exec - 0.005).abs() < 1e-12, "r_exec={}", terms.r_exec);
        assert!((terms.r_impact + 0.000625).abs() < 1e-15);
        assert_eq!(terms.r_cash, 0.0);
    }

    #[test]
    fn all_zero_actions_give_zero_shared_reward() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 1000.0,
            orders: vec![order("AAA", 1, 10.0), order("BBB", -1, 5.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        let r = env.step(&[0, 0]).unwrap();
        assert_eq!(r.shared_reward, 0.0);
    }

    #[test]
    fn cash_exhaustion_penalizes_every_agent() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 500.0,
            orders: vec![order("AAA", -1, 100.0), order("BBB", 1, 1.0)],
        };
        let config = small_config(2);
        let (mut env, _) = reset(&set, &day, &config).unwrap();
        // Outflow 1000 > 500 + 10 inflow -> conflict; sigma penalty for both.
        let r = env.step(&[4, 4]).unwrap();
        assert!(r.cash_conflict);
        for terms in &r.reward_terms {
            assert_eq!(terms.r_cash, -config.sigma);
        }
    }

    #[test]
    fn aep_weighted_mean_hand_case() {
        // Two steps, volumes {1,3} at step prices {10, 20} -> AEP 17.5.
        let mut day = flat_day(10.0);
        {
            let asset = day.assets.get_mut("AAA").unwrap();
            for m in 0..4 {
                asset.prices[m] = 10.0;
            }
            for m in 4..8 {
                asset.prices[m] = 20.0;
            }
        }
        let set = OrderSet {
            date: day.date,
            initial_cash: 0.0,
            orders: vec![order("AAA", 1, 4.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        env.step(&[1]).unwrap(); // 25% of 4 = 1 share at 10
        env.step(&[0]).unwrap(); // remainder 3 shares at 20
        let aep = env.episode_aep(0).unwrap();
        assert!((aep - 17.5).abs() < 1e-12, "aep={aep}");
    }

    #[test]
    fn minute_twap_aep_equals_day_average() {
        let config = SyntheticMarketConfig {
            n_assets: 2,
            days: 1,
            rng_seed: 9,
            ..SyntheticMarketConfig::default()
        };
        let data = generate_synthetic_market(&config).unwrap();
        let sets = generate_order_sets(
            &data,
            &OrderGenParams {
                orders_per_day: 2,
                direction_balance: 1.0,
                ..OrderGenParams::default()
            },
        )
        .unwrap();
        let env_config = EnvConfig::default();
        let (mut env, _) = reset(&sets[0], &data[0], &env_config).unwrap();
        let step_minutes = data[0].minutes_per_day / env_config.timesteps_t;
        // Spread each order perfectly evenly over every minute of the day.
        let n = env.n_agents();
        let per_minute: Vec<Vec<f64>> = sets[0]
            .orders
            .iter()
            .map(|o| allocate_exact(o.amount, &vec![1.0; data[0].minutes_per_day]))
            .collect();
        for t in 0..env_config.timesteps_t {
            let allocs: Vec<Vec<f64>> = (0..n)
                .map(|i| per_minute[i][t * step_minutes..(t + 1) * step_minutes].to_vec())
                .collect();
            env.step_with_allocations(&allocs).unwrap();
        }
        for i in 0..n {
            let aep = env.episode_aep(i).unwrap();
            let avg = env.accounting().unwrap().per_agent[i].day_avg_price;
            assert!(
                (aep / avg - 1.0).abs() < 1e-9,
                "aep {aep} vs day mean {avg}"
            );
        }
    }

    #[test]
    fn step_after_done_errors() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 10.0,
            orders: vec![order("AAA", 1, 1.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        env.step(&[0]).unwrap();
        env.step(&[0]).unwrap();
        assert!(env.step(&[0]).is_err());
    }

    #[test]
    fn full_fulfillment_closes_orders_exactly() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 1e6,
            orders: vec![order("AAA", -1, 77.7), order("BBB", 1, 13.13)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(4)).unwrap();
        let mut result = None;
        for a in [1usize, 2, 0, 0] {
            result = Some(env.step(&[a, a]).unwrap());
        }
        let result = result.unwrap();
        assert!(!result.fulfillment_violation);
        let acc = env.accounting().unwrap();
        for agent in &acc.per_agent {
            // Replay the remaining-shares chain: must land exactly on zero.
            let mut remaining = agent.amount;
            for &q in &agent.step_volumes {
                remaining -= q;
            }
            assert_eq!(remaining, 0.0, "residue {remaining}");
        }
    }

    #[test]
    fn final_step_cutoff_flags_violation() {
        let day = flat_day(10.0);
        let set = OrderSet {
            date: day.date,
            initial_cash: 50.0, // affords 5 of 100 shares
            orders: vec![order("AAA", -1, 100.0)],
        };
        let (mut env, _) = reset(&set, &day, &small_config(2)).unwrap();
        env.step(&[0]).unwrap();
        let r = env.step(&[0]).unwrap();
        assert!(r.fulfillment_violation);
        assert!(r.cash_conflict);
        let acc = env.accounting().unwrap();
        assert!(acc.per_agent[0].fulfillment_violation);
        assert!(acc.per_agent[0].executed_volume() < 100.0);
    }
}
