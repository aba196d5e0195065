//! Metric formulas and episode aggregation.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::env::EpisodeAccounting;
use crate::error::{Error, Result};

/// Execution gain in basis points (1e-4): d * (aep - p_avg) / p_avg * 1e4.
/// Positive is favorable for both directions.
pub fn execution_gain(aep: f64, day_avg_price: f64, direction: i8) -> f64 {
    f64::from(direction) * ((aep - day_avg_price) / day_avg_price) * 1e4
}

/// Additional annualized rate of return (%) implied by a mean execution
/// gain, under a fixed daily turnover compounded over the trading year.
pub fn arr_from_eg(eg_bp: f64, daily_turnover: f64, trading_days: u32) -> f64 {
    let eg_fraction = eg_bp * 1e-4;
    ((1.0 + eg_fraction * daily_turnover).powi(trading_days as i32) - 1.0) * 100.0
}

/// Fraction of orders with strictly positive EG.
pub fn pos(egs: &[f64]) -> f64 {
    if egs.is_empty() {
        return 0.0;
    }
    egs.iter().filter(|&&e| e > 0.0).count() as f64 / egs.len() as f64
}

/// Gain-loss ratio E[EG | EG>0] / E[-EG | EG<0]; absent when either side
/// has no samples.
pub fn glr(egs: &[f64]) -> Option<f64> {
    let gains: Vec<f64> = egs.iter().copied().filter(|&e| e > 0.0).collect();
    let losses: Vec<f64> = egs.iter().copied().filter(|&e| e < 0.0).collect();
    if gains.is_empty() || losses.is_empty() {
        return None;
    }
    let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let mean_loss = -losses.iter().sum::<f64>() / losses.len() as f64;
    Some(mean_gain / mean_loss)
}

/// Percentage of timesteps with the cash balance exactly zero, averaged
/// over episodes.
pub fn toc(episodes: &[EpisodeAccounting]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().map(|e| e.zero_cash_fraction()).sum::<f64>() / episodes.len() as f64 * 100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderResult {
    pub date: NaiveDate,
    pub asset: String,
    pub direction: i8,
    pub amount: f64,
    /// Average execution price; absent when nothing traded.
    pub aep: Option<f64>,
    pub eg_bp: Option<f64>,
    pub fulfilled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean EG over all orders with a defined AEP (violation-affected
    /// orders included, flagged below).
    pub eg_bp: f64,
    /// Mean EG restricted to fully fulfilled orders.
    pub eg_bp_fulfilled_only: f64,
    pub arr_pct: f64,
    pub pos: f64,
    pub glr: Option<f64>,
    pub toc_pct: f64,
    pub violation_rate: f64,
    pub n_orders: usize,
    pub n_episodes: usize,
    pub per_order: Vec<OrderResult>,
    pub config_digest: String,
}

/// Aggregate finished episodes into the metric report. Pure function of
/// the episode records.
pub fn aggregate_metrics(
    episodes: &[(NaiveDate, EpisodeAccounting)],
    config_digest: String,
) -> Result<MetricsReport> {
    if episodes.is_empty() {
        return Err(Error::validation("no episodes to aggregate"));
    }
    let mut per_order = Vec::new();
    for (date, acc) in episodes {
        for agent in &acc.per_agent {
            let aep = agent.aep().ok();
            let eg = aep.map(|p| execution_gain(p, agent.day_avg_price, agent.direction));
            per_order.push(OrderResult {
                date: *date,
                asset: agent.asset.clone(),
                direction: agent.direction,
                amount: agent.amount,
                aep,
                eg_bp: eg,
                fulfilled: !agent.fulfillment_violation,
            });
        }
    }
    let all_egs: Vec<f64> = per_order.iter().filter_map(|o| o.eg_bp).collect();
    let fulfilled_egs: Vec<f64> = per_order
        .iter()
        .filter(|o| o.fulfilled)
        .filter_map(|o| o.eg_bp)
        .collect();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let eg_bp = mean(&all_egs);
    let violations = per_order.iter().filter(|o| !o.fulfilled).count();
    let accs: Vec<EpisodeAccounting> = episodes.iter().map(|(_, a)| a.clone()).collect();
    Ok(MetricsReport {
        eg_bp,
        eg_bp_fulfilled_only: mean(&fulfilled_egs),
        arr_pct: arr_from_eg(eg_bp, 0.10, 250),
        pos: pos(&all_egs),
        glr: glr(&all_egs),
        toc_pct: toc(&accs),
        violation_rate: violations as f64 / per_order.len() as f64,
        n_orders: per_order.len(),
        n_episodes: episodes.len(),
        per_order,
        config_digest,
    })
}
