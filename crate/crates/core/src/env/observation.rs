//! Per-agent observations.
//!
//! An observation at step `t` (1-based) contains nothing from the minutes of
//! step `t` or later: market history covers minutes `[0, (t-1)*step_minutes)`
//! and the cash/volume histories cover completed steps only. Price features
//! are normalized by the first observed price of the day; volume features by
//! the running mean of the volumes observed so far, so a feature never
//! changes once emitted.

use serde::{Deserialize, Serialize};

use crate::market::AssetDay;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    /// Step about to be decided, 1-based.
    pub step: usize,
    pub timesteps_t: usize,
    /// t / T.
    pub elapsed_fraction: f64,
    pub direction: i8,
    /// c_0..c_{t-1}, each divided by c_0 (or left raw when c_0 = 0).
    pub cash_history: Vec<f64>,
    /// Executed fraction q/M of each completed step.
    pub traded_volume_history: Vec<f64>,
    /// Per observed minute: p_m / p_0.
    pub price_history: Vec<f64>,
    /// Per observed minute: v_m / mean(v_0..v_m).
    pub volume_history: Vec<f64>,
}

impl AgentObservation {
    pub(crate) fn build(
        asset: &AssetDay,
        direction: i8,
        step: usize,
        timesteps_t: usize,
        step_minutes: usize,
        cash_history_raw: &[f64],
        c0: f64,
        traded_volume_history: &[f64],
    ) -> Self {
        let visible_minutes = (step - 1) * step_minutes;
        let p0 = asset.prices[0];
        let price_history: Vec<f64> = asset.prices[..visible_minutes]
            .iter()
            .map(|&p| p / p0)
            .collect();
        let mut volume_history = Vec::with_capacity(visible_minutes);
        let mut running_sum = 0.0;
        for (i, &v) in asset.volumes[..visible_minutes].iter().enumerate() {
            running_sum += v;
            let mean = running_sum / (i + 1) as f64;
            volume_history.push(if mean > 0.0 { v / mean } else { 0.0 });
        }
        let cash_denom = if c0 > 0.0 { c0 } else { 1.0 };
        AgentObservation {
            step,
            timesteps_t,
            elapsed_fraction: step as f64 / timesteps_t as f64,
            direction,
            cash_history: cash_history_raw.iter().map(|&c| c / cash_denom).collect(),
            traded_volume_history: traded_volume_history.to_vec(),
            price_history,
            volume_history,
        }
    }

    /// Latest normalized cash balance.
    pub fn normalized_cash(&self) -> f64 {
        *self.cash_history.last().unwrap_or(&1.0)
    }

    /// Total executed fraction so far.
    pub fn cumulative_traded(&self) -> f64 {
        self.traded_volume_history.iter().sum()
    }
}
