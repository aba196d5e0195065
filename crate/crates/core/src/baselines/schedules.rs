//! Schedule construction and the baseline episode runner.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EpisodeAccounting, ExecutionEnv};
use crate::error::{Error, Result};
use crate::market::{OrderSet, TradingDayData};
use crate::numeric::allocate_exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Twap,
    Vwap,
    AlmgrenChriss,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "twap" => Ok(BaselineKind::Twap),
            "vwap" => Ok(BaselineKind::Vwap),
            "ac" | "almgren-chriss" | "almgrenchriss" => Ok(BaselineKind::AlmgrenChriss),
            other => Err(Error::validation(format!("unknown baseline {other}"))),
        }
    }
}

/// Per-minute mean volume fractions; non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub fractions: Vec<f64>,
}

impl VolumeProfile {
    pub fn uniform(minutes: usize) -> Self {
        VolumeProfile {
            fractions: vec![1.0 / minutes as f64; minutes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::validation("empty volume profile"));
        }
        if self.fractions.iter().any(|&f| f < 0.0 || !f.is_finite()) {
            return Err(Error::validation("volume profile must be non-negative"));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "volume profile sums to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Pool the per-minute volume share over all asset-days of the given dates
/// (the training split in the usual pipeline).
pub fn estimate_volume_profile(
    dataset: &[TradingDayData],
    dates: &[chrono::NaiveDate],
) -> Result<VolumeProfile> {
    let mut sums: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for day in dataset.iter().filter(|d| dates.contains(&d.date)) {
        for asset in day.assets.values() {
            let total = asset.day_volume();
            if total <= 0.0 {
                continue;
            }
            let sums = sums.get_or_insert_with(|| vec![0.0; day.minutes_per_day]);
            for (s, &v) in sums.iter_mut().zip(&asset.volumes) {
                *s += v / total;
            }
            count += 1;
        }
    }
    let mut fractions = sums.ok_or_else(|| Error::validation("no asset-days for profile"))?;
    for f in fractions.iter_mut() {
        *f /= count as f64;
    }
    // Normalize away accumulated rounding so the invariant holds exactly.
    let sum: f64 = fractions.iter().sum();
    for f in fractions.iter_mut() {
        *f /= sum;
    }
    let last = fractions.len() - 1;
    let head: f64 = fractions[..last].iter().sum();
    fractions[last] = 1.0 - head;
    let profile = VolumeProfile { fractions };
    profile.validate()?;
    Ok(profile)
}

/// Evenly distribute `amount` over `minutes`; the last minute absorbs the
/// rounding remainder so the total is exact.
pub fn twap_schedule(amount: f64, minutes: usize) -> Result<Vec<f64>> {
    if minutes == 0 {
        return Err(Error::validation("twap over zero minutes"));
    }
    if !(amount > 0.0) {
        return Err(Error::validation("twap amount must be positive"));
    }
    Ok(allocate_exact(amount, &vec![1.0; minutes]))
}

/// Volume proportional to the profile; exact total.
pub fn vwap_schedule(amount: f64, profile: &VolumeProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    if !(amount > 0.0) {
        return Err(Error::validation("vwap amount must be positive"));
    }
    Ok(allocate_exact(amount, &profile.fractions))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ACParams {
    pub risk_aversion: f64,
    pub temporary_impact: f64,
    pub permanent_impact: f64,
    pub volatility_estimate: f64,
}

impl Default for ACParams {
    fn default() -> Self {
        ACParams {
            risk_aversion: 1e-6,
            temporary_impact: 2.5e-6,
            permanent_impact: 2.5e-7,
            volatility_estimate: 0.01,
        }
    }
}

impl ACParams {
    pub fn validate(&self) -> Result<()> {
        if self.risk_aversion < 0.0 || self.permanent_impact < 0.0 {
            return Err(Error::validation("impact/risk parameters must be >= 0"));
        }
        if !(self.temporary_impact > 0.0) || !(self.volatility_estimate > 0.0) {
            return Err(Error::validation(
                "temporary_impact and volatility_estimate must be > 0",
            ));
        }
        Ok(())
    }

    /// Decay rate of the sinh inventory path.
    pub fn kappa(&self) -> f64 {
        (self.risk_aversion * self.volatility_estimate * self.volatility_estimate
            / self.temporary_impact)
            .sqrt()
    }
}

/// Closed-form Almgren-Chriss per-step volumes: the inventory path is
/// x_j = X sinh(kappa (T - j)) / sinh(kappa T) and step j trades
/// x_{j-1} - x_j. kappa -> 0 recovers TWAP.
pub fn ac_schedule(amount: f64, params: &ACParams, t_steps: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if t_steps == 0 {
        return Err(Error::validation("ac schedule over zero steps"));
    }
    if !(amount > 0.0) {
        return Err(Error::validation("ac amount must be positive"));
    }
    let kappa = params.kappa();
    let weights: Vec<f64> = if kappa < 1e-9 {
        vec![1.0; t_steps]
    } else {
        let denom = (kappa * t_steps as f64).sinh();
        let inventory =
            |j: usize| amount * (kappa * (t_steps - j) as f64).sinh() / denom;
        (1..=t_steps).map(|j| inventory(j - 1) - inventory(j)).collect()
    };
    Ok(allocate_exact(amount, &weights))
}

/// Run one order set through the environment under a baseline schedule.
///
/// Schedules are built per order (VWAP needs a profile estimated on the
/// training split) and then executed step by step so the cash constraint is
/// applied exactly as it is for learned policies.
pub fn run_baseline_episode(
    kind: BaselineKind,
    order_set: &OrderSet,
    day: &TradingDayData,
    env_config: &EnvConfig,
    profile: Option<&VolumeProfile>,
    ac_params: &ACParams,
) -> Result<EpisodeAccounting> {
    let mut env = ExecutionEnv::new(order_set, day, env_config)?;
    let minutes = day.minutes_per_day;
    let t_steps = env_config.timesteps_t;
    let step_minutes = minutes / t_steps;

    // Per-order minute allocation over the whole day.
    let mut day_allocations: Vec<Vec<f64>> = Vec::with_capacity(order_set.orders.len());
    for order in &order_set.orders {
        let alloc = match kind {
            BaselineKind::Twap => twap_schedule(order.amount, minutes)?,
            BaselineKind::Vwap => {
                let profile = profile
                    .ok_or_else(|| Error::validation("vwap baseline needs a volume profile"))?;
                if profile.fractions.len() != minutes {
                    return Err(Error::validation(format!(
                        "profile covers {} minutes, day has {minutes}",
                        profile.fractions.len()
                    )));
                }
                vwap_schedule(order.amount, profile)?
            }
            BaselineKind::AlmgrenChriss => {
                let per_step = ac_schedule(order.amount, ac_params, t_steps)?;
                let mut alloc = Vec::with_capacity(minutes);
                for &step_volume in &per_step {
                    alloc.extend(allocate_exact(step_volume, &vec![1.0; step_minutes]));
                }
                alloc
            }
        };
        day_allocations.push(alloc);
    }

    for t in 0..t_steps {
        let step_allocs: Vec<Vec<f64>> = day_allocations
            .iter()
            .map(|alloc| alloc[t * step_minutes..(t + 1) * step_minutes].to_vec())
            .collect();
        env.step_with_allocations(&step_allocs)?;
    }
    env.accounting()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_order_sets, generate_synthetic_market, OrderGenParams, SyntheticMarketConfig};

    #[test]
    fn twap_even_and_exact() {
        let v = twap_schedule(240.0, 240).unwrap();
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-9));
        assert_eq!(v.iter().sum::<f64>(), 240.0);

        let v = twap_schedule(7.0, 3).unwrap();
        assert_eq!(v.iter().sum::<f64>(), 7.0);
        for &x in &v {
            assert!((x - 7.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn vwap_uniform_profile_matches_twap() {
        let twap = twap_schedule(100.0, 16).unwrap();
        let vwap = vwap_schedule(100.0, &VolumeProfile::uniform(16)).unwrap();
        assert_eq!(twap, vwap);
    }

    #[test]
    fn vwap_concentrated_profile() {
        let mut fractions = vec![0.0; 10];
        fractions[3] = 1.0;
        let v = vwap_schedule(50.0, &VolumeProfile { fractions }).unwrap();
        assert_eq!(v[3], 50.0);
        assert_eq!(v.iter().sum::<f64>(), 50.0);
    }

    #[test]
    fn ac_zero_risk_aversion_is_twap() {
        let params = ACParams {
            risk_aversion: 0.0,
            ..ACParams::default()
        };
        let v = ac_schedule(80.0, &params, 8).unwrap();
        for &x in &v {
            assert!((x - 10.0).abs() < 1e-9);
        }
        assert_eq!(v.iter().sum::<f64>(), 80.0);
    }

    #[test]
    fn ac_high_risk_aversion_front_loads() {
        let params = ACParams {
            risk_aversion: 0.5,
            temporary_impact: 1e-4,
            volatility_estimate: 0.02,
            ..ACParams::default()
        };
        assert!(params.kappa() > 0.05, "kappa {}", params.kappa());
        let v = ac_schedule(100.0, &params, 8).unwrap();
        for w in v.windows(2) {
            assert!(w[0] > w[1], "schedule not strictly decreasing: {v:?}");
        }
        assert_eq!(v.iter().sum::<f64>(), 100.0);
    }

    #[test]
    fn ac_inventory_positive_decreasing_to_zero() {
        let params = ACParams {
            risk_aversion: 0.1,
            temporary_impact: 1e-4,
            volatility_estimate: 0.02,
            ..ACParams::default()
        };
        let v = ac_schedule(60.0, &params, 6).unwrap();
        let mut inventory = 60.0;
        for &q in &v {
            assert!(q > 0.0);
            inventory -= q;
            assert!(inventory >= -1e-12);
        }
        assert!(inventory.abs() < 1e-9);
    }

    #[test]
    fn twap_through_env_recovers_day_average() {
        let data = generate_synthetic_market(&SyntheticMarketConfig {
            n_assets: 3,
            days: 2,
            rng_seed: 5,
            ..SyntheticMarketConfig::default()
        })
        .unwrap();
        let sets = generate_order_sets(
            &data,
            &OrderGenParams {
                orders_per_day: 3,
                direction_balance: 0.4,
                cash_budget_factor: 3.0,
                rng_seed: 1,
            },
        )
        .unwrap();
        for (set, day) in sets.iter().zip(&data) {
            let acc = run_baseline_episode(
                BaselineKind::Twap,
                set,
                day,
                &EnvConfig::default(),
                None,
                &ACParams::default(),
            )
            .unwrap();
            for agent in &acc.per_agent {
                let aep = agent.aep().unwrap();
                assert!(
                    (aep / agent.day_avg_price - 1.0).abs() < 1e-9,
                    "TWAP AEP {aep} vs day mean {}",
                    agent.day_avg_price
                );
            }
        }
    }

    #[test]
    fn vwap_on_matching_day_hits_volume_weighted_price() {
        // A day whose realized volume equals the profile: VWAP's AEP equals
        // the volume-weighted market price.
        let data = generate_synthetic_market(&SyntheticMarketConfig {
            n_assets: 1,
            days: 1,
            intraday_shape: crate::market::IntradayShape::UShapeVolume,
            rng_seed: 3,
            ..SyntheticMarketConfig::default()
        })
        .unwrap();
        let day = &data[0];
        let asset = day.assets.values().next().unwrap();
        let total = asset.day_volume();
        let fractions: Vec<f64> = asset.volumes.iter().map(|&v| v / total).collect();
        let sum: f64 = fractions.iter().sum();
        let mut fractions: Vec<f64> = fractions.iter().map(|f| f / sum).collect();
        let last = fractions.len() - 1;
        let head: f64 = fractions[..last].iter().sum();
        fractions[last] = 1.0 - head;
        let profile = VolumeProfile { fractions };

        let set = OrderSet {
            date: day.date,
            initial_cash: 0.0,
            orders: vec![crate::market::OrderSpec {
                asset: asset.asset_id.clone(),
                direction: 1,
                amount: 1000.0,
            }],
        };
        let acc = run_baseline_episode(
            BaselineKind::Vwap,
            &set,
            day,
            &EnvConfig::default(),
            Some(&profile),
            &ACParams::default(),
        )
        .unwrap();
        let aep = acc.per_agent[0].aep().unwrap();
        let vw_price: f64 = asset
            .prices
            .iter()
            .zip(&asset.volumes)
            .map(|(&p, &v)| p * v)
            .sum::<f64>()
            / total;
        assert!(
            (aep / vw_price - 1.0).abs() < 1e-9,
            "VWAP AEP {aep} vs volume-weighted price {vw_price}"
        );
    }

    #[test]
    fn estimated_profile_is_valid() {
        let data = generate_synthetic_market(&SyntheticMarketConfig {
            n_assets: 3,
            days: 4,
            intraday_shape: crate::market::IntradayShape::UShapeVolume,
            ..SyntheticMarketConfig::default()
        })
        .unwrap();
        let dates: Vec<_> = data.iter().map(|d| d.date).collect();
        let profile = estimate_volume_profile(&data, &dates).unwrap();
        profile.validate().unwrap();
        // U-shaped volume: ends heavier than the middle.
        let m = profile.fractions.len();
        assert!(profile.fractions[0] > profile.fractions[m / 2]);
    }
}
