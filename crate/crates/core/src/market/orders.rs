//! Order sets and their randomized generation.
//!
//! An order set is one day's work: `n` orders over distinct assets plus the
//! initial cash balance shared by all of them. The generator draws order
//! amounts as small fractions of each asset's day volume and sizes the cash
//! budget from the net acquisition/liquidation imbalance at day-average
//! prices, then rescales acquisition amounts so that a TWAP execution at
//! day-average prices can never drive the balance negative.

use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::bars::TradingDayData;
use crate::rng::stream;

/// Direction +1 liquidates (sells), -1 acquires (buys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSpec {
    pub asset: String,
    pub direction: i8,
    /// Shares to trade; strictly positive.
    pub amount: f64,
}

impl OrderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.direction != 1 && self.direction != -1 {
            return Err(Error::validation(format!(
                "direction must be +1 or -1, got {}",
                self.direction
            )));
        }
        if !(self.amount > 0.0) {
            return Err(Error::validation("order amount must be positive"));
        }
        Ok(())
    }

    pub fn is_liquidation(&self) -> bool {
        self.direction == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSet {
    pub date: NaiveDate,
    pub initial_cash: f64,
    pub orders: Vec<OrderSpec>,
}

impl OrderSet {
    pub fn validate_against(&self, day: &TradingDayData) -> Result<()> {
        if self.orders.is_empty() {
            return Err(Error::validation("order set must contain at least one order"));
        }
        if !(self.initial_cash >= 0.0) {
            return Err(Error::validation("initial cash must be non-negative"));
        }
        for order in &self.orders {
            order.validate()?;
            if day.asset(&order.asset).is_none() {
                return Err(Error::validation(format!(
                    "order asset {} missing from day {}",
                    order.asset, day.date
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderGenParams {
    pub orders_per_day: usize,
    /// Fraction of orders that are liquidations, in [0,1].
    pub direction_balance: f64,
    /// Scales the initial cash relative to the net acquisition shortfall at
    /// day-average prices; smaller is tighter.
    pub cash_budget_factor: f64,
    pub rng_seed: u64,
}

impl Default for OrderGenParams {
    fn default() -> Self {
        OrderGenParams {
            orders_per_day: 4,
            direction_balance: 0.5,
            cash_budget_factor: 1.0,
            rng_seed: 0,
        }
    }
}

/// Order amounts are capped at this fraction of the asset's day volume.
pub const MAX_DAY_VOLUME_FRACTION: f64 = 0.05;

fn cash_epsilon(gross_notional: f64) -> f64 {
    (1e-6 * gross_notional).max(1.0)
}

/// Generate one order set per trading day.
///
/// Budget rule: `c0 = cash_budget_factor * max(0, cost - proceeds) + eps`
/// with cost/proceeds valued at day-average prices. If the acquisition cost
/// exceeds `proceeds + c0 - eps`, acquisition amounts are scaled down so the
/// set stays executable with non-negative cash under uniform pacing.
pub fn generate_order_sets(
    dataset: &[TradingDayData],
    params: &OrderGenParams,
) -> Result<Vec<OrderSet>> {
    if params.orders_per_day == 0 {
        return Err(Error::validation("orders_per_day must be >= 1"));
    }
    if !(0.0..=1.0).contains(&params.direction_balance) {
        return Err(Error::validation("direction_balance must be in [0,1]"));
    }
    if !(params.cash_budget_factor >= 0.0) {
        return Err(Error::validation("cash_budget_factor must be >= 0"));
    }

    let mut out = Vec::with_capacity(dataset.len());
    for (day_idx, day) in dataset.iter().enumerate() {
        if day.assets.len() < params.orders_per_day {
            return Err(Error::validation(format!(
                "day {} has {} assets, cannot draw {} distinct orders",
                day.date,
                day.assets.len(),
                params.orders_per_day
            )));
        }
        let mut rng = stream(params.rng_seed, "orders", day_idx as u64);
        let mut asset_ids: Vec<&str> = day.assets.keys().map(|s| s.as_str()).collect();
        asset_ids.shuffle(&mut rng);
        let chosen = &asset_ids[..params.orders_per_day];

        let n_liq = (params.direction_balance * params.orders_per_day as f64).round() as usize;
        let mut orders = Vec::with_capacity(params.orders_per_day);
        for (i, asset_id) in chosen.iter().enumerate() {
            let asset = &day.assets[*asset_id];
            let frac = rng.gen_range(0.2..1.0) * MAX_DAY_VOLUME_FRACTION;
            let amount = frac * asset.day_volume();
            orders.push(OrderSpec {
                asset: (*asset_id).to_string(),
                direction: if i < n_liq { 1 } else { -1 },
                amount,
            });
        }

        let value_at_avg = |o: &OrderSpec| o.amount * day.assets[&o.asset].day_average_price();
        let cost: f64 = orders
            .iter()
            .filter(|o| !o.is_liquidation())
            .map(value_at_avg)
            .sum();
        let proceeds: f64 = orders
            .iter()
            .filter(|o| o.is_liquidation())
            .map(value_at_avg)
            .sum();
        let eps = cash_epsilon(cost + proceeds);
        let initial_cash = params.cash_budget_factor * (cost - proceeds).max(0.0) + eps;

        // Enforce feasibility: cost' <= proceeds + c0 - eps.
        let cost_cap = proceeds + initial_cash - eps;
        if cost > cost_cap {
            let scale = cost_cap / cost;
            for o in orders.iter_mut().filter(|o| !o.is_liquidation()) {
                o.amount *= scale;
            }
        }

        out.push(OrderSet {
            date: day.date,
            initial_cash,
            orders,
        });
    }
    Ok(out)
}

/// Serialize order sets to the JSON interchange format.
pub fn write_order_sets(path: &Path, sets: &[OrderSet]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, sets)?;
    Ok(())
}

pub fn load_order_sets(path: &Path) -> Result<Vec<OrderSet>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let sets: Vec<OrderSet> = serde_json::from_reader(file)?;
    for set in &sets {
        if set.orders.is_empty() {
            return Err(Error::validation(format!(
                "order set for {} has no orders",
                set.date
            )));
        }
        for order in &set.orders {
            order.validate()?;
        }
    }
    Ok(sets)
}
